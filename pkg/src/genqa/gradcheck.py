"""Finite-difference verification of tape gradients.

The checker perturbs one coordinate at a time, so the loss function is
re-evaluated 2 * n_coordinates times per tensor; callers keep the models
tiny. It temporarily mutates tensor buffers in place and restores them.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


def numeric_gradient(loss_fn: Callable[[], float], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``loss_fn`` with respect to ``t``."""
    grad = np.zeros(t.shape, dtype=np.float64)
    flat = t.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        hi = loss_fn()
        flat[i] = keep - h
        lo = loss_fn()
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad


def max_relative_error(
    analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8
) -> float:
    """Worst relative disagreement over coordinates that are not both ~zero."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a), np.abs(n))
    mask = denom > floor
    if not mask.any():
        return 0.0
    return float((np.abs(a - n)[mask] / denom[mask]).max())


def check_gradients(
    loss_fn: Callable[[], float],
    analytic: Mapping[str, np.ndarray],
    tensors: Mapping[str, Tensor],
    h: float = 1e-5,
    rtol: float = 1e-4,
    floor: float = 1e-8,
) -> dict[str, float]:
    """Compare analytic gradients against central differences, slot by slot.

    Returns the worst relative error per slot name and raises AssertionError
    naming the first offending slot if any error exceeds ``rtol``.
    """
    report: dict[str, float] = {}
    for name, t in tensors.items():
        numeric = numeric_gradient(loss_fn, t, h=h)
        err = max_relative_error(analytic[name], numeric, floor=floor)
        report[name] = err
        if err >= rtol:
            raise AssertionError(
                f"gradient mismatch in slot {name!r}: relative error {err:.3e} >= {rtol:.1e}"
            )
    return report
