"""Dense float64 tensors with reverse-mode differentiation."""

from .gradcheck import gradcheck, gradcheck_params
from .tensor import (
    IGNORE_INDEX,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    gelu,
    l2_normalize_rows,
    layer_norm,
    linear,
    matmul,
    mean_rows,
    mul,
    reshape,
    row_softmax,
    scale,
    slice_,
    sub,
    sum_all,
    transpose,
)

__all__ = [
    "IGNORE_INDEX", "Tensor", "add", "as_tensor", "backward", "concat", "cross_entropy",
    "dropout", "embedding_lookup", "gelu", "gradcheck", "gradcheck_params",
    "l2_normalize_rows", "layer_norm", "linear", "matmul", "mean_rows", "mul", "reshape",
    "row_softmax", "scale", "slice_", "sub", "sum_all", "transpose",
]
