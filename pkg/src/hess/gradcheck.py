"""Central-difference gradient checking for tape-recorded computations.

The harness treats a computation as a closure over a set of parameter tensors:
``build_loss()`` must re-run the forward pass from the parameters' *current*
values and return a scalar :class:`~hess.autodiff.Tensor`.  Analytic gradients
come from one tape; numeric ones from perturbing parameter entries in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad

DEFAULT_STEP = 1e-5


@dataclass
class GradCheckResult:
    """Worst relative error per parameter, plus the global verdict."""

    tol: float
    max_rel_err: float = 0.0
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_err)) and self.max_rel_err < self.tol


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    denom = max(abs(analytic), abs(numeric), floor)
    return abs(analytic - numeric) / denom


def analytic_gradients(build_loss: Callable[[], ad.Tensor],
                       params: Mapping[str, ad.Tensor]) -> dict[str, np.ndarray]:
    for p in params.values():
        p.zero_grad()
    with ad.GraphTape() as tape:
        loss = build_loss()
    tape.backward(loss)
    return {name: p.grad.copy() for name, p in params.items()}


def numeric_gradient_entry(build_loss: Callable[[], ad.Tensor],
                           param: ad.Tensor, flat_index: int,
                           step: float = DEFAULT_STEP) -> float:
    """Central difference of the loss w.r.t. one parameter entry."""
    flat = param.data.reshape(-1)
    saved = flat[flat_index]
    try:
        flat[flat_index] = saved + step
        f_plus = _loss_value(build_loss)
        flat[flat_index] = saved - step
        f_minus = _loss_value(build_loss)
    finally:
        flat[flat_index] = saved
    return (f_plus - f_minus) / (2.0 * step)


def _loss_value(build_loss: Callable[[], ad.Tensor]) -> float:
    # No tape: the forward evaluates eagerly and records nothing.
    return build_loss().item()


def check_gradients(build_loss: Callable[[], ad.Tensor],
                    params: Mapping[str, ad.Tensor],
                    *,
                    step: float = DEFAULT_STEP,
                    tol: float = 1e-4,
                    entries_per_param: int | None = None,
                    rng: np.random.Generator | None = None) -> GradCheckResult:
    """Compare analytic and central-difference gradients entry by entry.

    ``entries_per_param`` limits the number of randomly sampled entries per
    parameter (``None`` checks every entry).
    """
    analytic = analytic_gradients(build_loss, params)
    if rng is None:
        rng = np.random.default_rng(0)
    result = GradCheckResult(tol=tol)
    for name, param in params.items():
        n = param.size
        if entries_per_param is None or entries_per_param >= n:
            picks = np.arange(n)
        else:
            picks = rng.choice(n, size=entries_per_param, replace=False)
        worst = 0.0
        a_flat = analytic[name].reshape(-1)
        for i in picks:
            numeric = numeric_gradient_entry(build_loss, param, int(i), step=step)
            worst = max(worst, relative_error(float(a_flat[i]), numeric))
        result.per_param[name] = worst
        result.max_rel_err = max(result.max_rel_err, worst)
    return result
