"""Admissible timestep selection driven by the drift response.

The controller proposes

    raw = h_max * min( max( 1/||f_y||, ||y||/||f_y|| ), 1 )

which keeps ``h * ||f(y)||`` of the order ``h_max * max(1, ||y||)`` (a linear
growth bound in the state) while never exceeding ``h_max``.  The proposal is
clamped to ``[h_min, h_max]``; a raw proposal at or below ``h_min`` signals
that the step-size floor is active and the caller must take one backstop
step of length ``h_min`` with a scheme that is strongly convergent on its
own.  A zero drift response proposes ``h_max`` with no backstop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import MeshConfig

__all__ = ["StepDecision", "propose_step", "propose_step_batch"]


@dataclass(frozen=True)
class StepDecision:
    """Accepted step size, backstop flag, and the raw (pre-clamp) proposal."""

    h: float
    use_backstop: bool
    raw_proposal: float


def propose_step(y: np.ndarray, f_y: np.ndarray, config: MeshConfig) -> StepDecision:
    """Propose the next step from state ``y`` and drift response ``f_y = f(y)``.

    ``f_y`` is passed in rather than recomputed so the controller never
    spends extra drift evaluations.  Raises on non-finite inputs, which
    indicate an upstream blow-up.
    """
    y = np.asarray(y, dtype=float)
    f_y = np.asarray(f_y, dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(f_y))):
        raise FloatingPointError("non-finite state or drift passed to step controller")
    norm_f = math.sqrt(float(f_y @ f_y))
    h_max = config.h_max
    h_min = config.h_min
    if norm_f == 0.0:
        return StepDecision(h=h_max, use_backstop=False, raw_proposal=h_max)
    norm_y = math.sqrt(float(y @ y))
    raw = h_max * min(max(1.0, norm_y) / norm_f, 1.0)
    if raw <= h_min:
        return StepDecision(h=h_min, use_backstop=True, raw_proposal=raw)
    return StepDecision(h=raw, use_backstop=False, raw_proposal=raw)


def propose_step_batch(y: np.ndarray, f_y: np.ndarray, config: MeshConfig):
    """Vectorized controller for stacked states.

    Parameters
    ----------
    y, f_y
        Arrays of shape ``(k, d)``.

    Returns
    -------
    h : ndarray (k,)
        Accepted step sizes.
    use_backstop : ndarray (k,) of bool
    raw : ndarray (k,)
        Raw proposals (``h_max`` where the drift response vanishes).
    """
    y = np.asarray(y, dtype=float)
    f_y = np.asarray(f_y, dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(f_y))):
        raise FloatingPointError("non-finite state or drift passed to step controller")
    norm_f = np.sqrt(np.square(f_y).sum(axis=-1))
    norm_y = np.sqrt(np.square(y).sum(axis=-1))
    h_max = config.h_max
    h_min = config.h_min
    with np.errstate(divide="ignore"):
        ratio = np.where(norm_f > 0, np.maximum(1.0, norm_y) / np.where(norm_f > 0, norm_f, 1.0), np.inf)
    raw = h_max * np.minimum(ratio, 1.0)
    zero_drift = norm_f == 0.0
    raw = np.where(zero_drift, h_max, raw)
    use_backstop = (raw <= h_min) & ~zero_drift
    h = np.where(use_backstop, h_min, raw)
    return h, use_backstop, raw
