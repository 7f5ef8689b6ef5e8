"""Phase-invariant error measures and success statistics."""
from dataclasses import dataclass

import numpy as np

from ._validation import check_vector

SUCCESS_THRESHOLD = 1e-5


def align_phase(z, x):
    """Rotate `x` by the global phase that brings it closest to `z`."""
    z = check_vector(z, name="z")
    x = check_vector(x, z.shape[0], name="x")
    inner = np.vdot(x, z)
    if inner == 0:
        return x
    return x * (inner / abs(inner))


def dist(z, x):
    """``min_theta ||x exp(-j theta) - z||_2`` in closed form.

    The minimiser aligns `x` with `z` through the phase of ``x^H z``; the
    residual is formed explicitly rather than through the expanded quadratic
    so that tiny distances keep full relative precision.
    """
    z = check_vector(z, name="z")
    return float(np.linalg.norm(align_phase(z, x) - z))


def relative_error(z, x):
    x = check_vector(x, name="x")
    nx = np.linalg.norm(x)
    if nx == 0:
        raise ValueError("relative error is undefined for a zero ground truth")
    return dist(z, x) / nx


@dataclass(frozen=True)
class TrialOutcome:
    rel_error: float
    success: bool
    seed: int
    config_id: str = ""

    def __post_init__(self):
        if self.rel_error < 0:
            raise ValueError("relative error must be nonnegative")

    @classmethod
    def from_error(cls, rel_error, seed, config_id="", threshold=SUCCESS_THRESHOLD):
        rel_error = float(rel_error)
        return cls(rel_error, bool(rel_error <= threshold), seed, config_id)


def success_rate(outcomes):
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("success rate of an empty list is undefined")
    return sum(o.success for o in outcomes) / len(outcomes)
