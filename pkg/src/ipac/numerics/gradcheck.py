"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, backward


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def gradcheck(fn: Callable[[Tensor], Tensor], point, h: float = 1e-5) -> float:
    """Max relative error between the analytic gradient of ``fn`` and central differences.

    Relative error per coordinate is ``|a - n| / max(1, |a|, |n|)``. ``fn`` must
    be deterministic.
    """
    x0 = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)
    x = Tensor(x0.copy(), requires_grad=True)
    out = fn(x)
    backward(out)
    analytic = np.zeros_like(x0) if x.grad is None else x.grad

    numeric = np.zeros_like(x0)
    flat = x0.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(Tensor(x0.copy())).item()
        flat[i] = orig - h
        fm = fn(Tensor(x0.copy())).item()
        flat[i] = orig
        numeric.reshape(-1)[i] = (fp - fm) / (2.0 * h)
    return _rel_err(analytic, numeric)


def gradcheck_params(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-5,
    coords_per_param: int | None = None,
    seed: int = 0,
) -> dict[str, float]:
    """Check gradients of a closure with respect to named leaf tensors in place.

    With ``coords_per_param`` set, only a seeded random subset of coordinates of
    each tensor is perturbed; this keeps whole-model checks affordable.
    Returns the max relative error per parameter name.
    """
    for p in params.values():
        p.grad = None
    backward(loss_fn())
    rng = np.random.default_rng(seed)
    errors = {}
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        n = flat.size
        if coords_per_param is not None and coords_per_param < n:
            coords = np.sort(rng.choice(n, size=coords_per_param, replace=False))
        else:
            coords = np.arange(n)
        a = analytic.reshape(-1)[coords]
        num = np.empty(len(coords))
        for j, i in enumerate(coords):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn().item()
            flat[i] = orig - h
            fm = loss_fn().item()
            flat[i] = orig
            num[j] = (fp - fm) / (2.0 * h)
        errors[name] = _rel_err(a, num)
    for p in params.values():
        p.grad = None
    return errors
