"""Finite-difference suites: every core op, and the contrastive loss through a tiny encoder."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import numerics as nx
from .contrastive import PairBatch, ipac_loss
from .encoder import EncoderConfig, EncoderModel, embed_rows
from .lora import LoraConfig, attach_lora
from .numerics import Tensor, gradcheck, gradcheck_params

TOLERANCE = 1e-5


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    # random weights make every output coordinate contribute distinctly
    return nx.sum_all(nx.mul(out, Tensor(w)))


def core_op_cases(rng: np.random.Generator) -> dict[str, tuple[tuple[int, ...], Callable[[Tensor], Tensor]]]:
    """Scalar test functions exercising each core op; values are (input shape, fn)."""
    A = rng.normal(size=(3, 4))
    B = rng.normal(size=(4, 2))
    gamma = rng.normal(size=4)
    beta = rng.normal(size=4)
    ids = [2, 0, 2, 1]
    targets = [1, nx.IGNORE_INDEX, 0]
    w = {s: rng.normal(size=s) for s in [(3, 4), (3, 2), (4, 3), (1, 4), (4, 4), (6, 4)]}
    return {
        "matmul": ((3, 4), lambda x: _weighted(nx.matmul(x, Tensor(B)), w[(3, 2)])),
        "matmul_rhs": ((4, 2), lambda x: _weighted(nx.matmul(Tensor(A), x), w[(3, 2)])),
        "add": ((3, 4), lambda x: _weighted(nx.add(x, nx.mul(x, x)), w[(3, 4)])),
        "add_bias": ((4,), lambda x: _weighted(nx.add(Tensor(A), x), w[(3, 4)])),
        "mul": ((3, 4), lambda x: _weighted(nx.mul(x, Tensor(A)), w[(3, 4)])),
        "scale": ((3, 4), lambda x: _weighted(nx.scale(x, -1.7), w[(3, 4)])),
        "transpose": ((3, 4), lambda x: _weighted(nx.transpose(x), w[(4, 3)])),
        "row_softmax": ((3, 4), lambda x: _weighted(nx.row_softmax(x), w[(3, 4)])),
        "layer_norm": ((3, 4), lambda x: _weighted(nx.layer_norm(x, Tensor(gamma), Tensor(beta)), w[(3, 4)])),
        "layer_norm_gamma": ((4,), lambda x: _weighted(nx.layer_norm(Tensor(A), x, Tensor(beta)), w[(3, 4)])),
        "layer_norm_beta": ((4,), lambda x: _weighted(nx.layer_norm(Tensor(A), Tensor(gamma), x), w[(3, 4)])),
        "gelu": ((3, 4), lambda x: _weighted(nx.gelu(x), w[(3, 4)])),
        "embedding_lookup": ((3, 4), lambda x: _weighted(nx.embedding_lookup(x, ids), w[(4, 4)])),
        "mean_rows": ((3, 4), lambda x: _weighted(nx.mean_rows(x, [1, 0, 1]), w[(1, 4)])),
        "dropout": ((3, 4), lambda x: _weighted(nx.dropout(x, 0.4, seed=5), w[(3, 4)])),
        "concat": ((3, 4), lambda x: _weighted(nx.concat([x, nx.scale(x, 2.0)], axis=0), w[(6, 4)])),
        "slice": ((3, 4), lambda x: _weighted(nx.slice_(x, 1, 3, axis=1), w[(3, 2)])),
        "l2_normalize_rows": ((3, 4), lambda x: _weighted(nx.l2_normalize_rows(x), w[(3, 4)])),
        "cross_entropy": ((3, 4), lambda x: nx.cross_entropy(x, targets)),
        "linear": ((3, 4), lambda x: _weighted(nx.linear(x, Tensor(B.T), Tensor(np.ones(2))), w[(3, 2)])),
    }


CORE_OPS = tuple(core_op_cases(np.random.default_rng(0)))


def core_op_errors(points: int = 10, seed: int = 1000, h: float = 1e-5) -> dict[str, float]:
    """Max relative error per op over ``points`` seeded random inputs."""
    worst = {op: 0.0 for op in CORE_OPS}
    for k in range(points):
        rng = np.random.default_rng(seed + k)
        for op, (shape, fn) in core_op_cases(rng).items():
            worst[op] = max(worst[op], gradcheck(fn, rng.normal(size=shape), h))
    return worst


def tiny_ipac_setup(seed: int = 0, n_pairs: int = 2):
    """A 2-layer, hidden-32, 2-head encoder with non-zero adapters and a random pair batch."""
    cfg = EncoderConfig(layers=2, hidden=32, heads=2, ff_dim=64, vocab_size=20, max_positions=16,
                        dropout=0.1, proj_dim=8)
    model = EncoderModel.build(cfg, seed=seed)
    attach_lora(model, LoraConfig(r=2, alpha=4, dropout=0.1), seed=seed + 1)
    rng = np.random.default_rng(seed + 2)
    for name, p in model.params.items():
        if name.startswith("lora.") and name.endswith(".B"):
            p.data = rng.normal(0.0, 0.05, size=p.shape)
        p.requires_grad = True
    seqs_e = [[2, *rng.integers(4, 20, size=int(rng.integers(2, 6))).tolist(), 3] for _ in range(n_pairs)]
    seqs_t = [[2, *rng.integers(4, 20, size=int(rng.integers(2, 6))).tolist(), 3] for _ in range(n_pairs)]
    return model, seqs_e, seqs_t


def ipac_param_errors(seed: int = 0, coords_per_param: int | None = 6, temperature: float = 0.1,
                      h: float = 1e-5) -> dict[str, float]:
    """Relative error of d(loss)/d(param) for every parameter tensor of the tiny encoder.

    Dropout is off (inference mode) so the loss is deterministic.
    """
    model, seqs_e, seqs_t = tiny_ipac_setup(seed)

    def loss() -> Tensor:
        z_e = embed_rows(model, seqs_e, train_mode=False)
        z_t = embed_rows(model, seqs_t, train_mode=False)
        return ipac_loss(PairBatch(z_e, z_t, temperature))

    return gradcheck_params(loss, model.params, h=h, coords_per_param=coords_per_param, seed=seed)


def ipac_embedding_error(seed: int = 0, n: int = 4, dim: int = 6, temperature: float = 0.1) -> float:
    """Gradient of the symmetric loss with respect to raw embedding matrices."""
    rng = np.random.default_rng(seed)
    z0 = rng.normal(size=(2 * n, dim))

    def fn(z: Tensor) -> Tensor:
        zn = nx.l2_normalize_rows(z)
        return ipac_loss(PairBatch(nx.slice_(zn, 0, n), nx.slice_(zn, n, 2 * n), temperature))

    return gradcheck(fn, z0)
