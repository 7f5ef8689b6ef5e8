"""Numerical checks of the recovery-guarantee machinery.

``B`` is the ``m x n`` matrix whose rows are the conjugated measurement
vectors and ``calB(W)`` the vector of quadratic forms ``b^H W b``. The
checks here are empirical: tangent directions are sampled, so a passing
report is a spot check over the draws, not a certificate.
"""
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_int, check_seed, check_vector
from .forward import DENSE_LIMIT, adjoint_field, derive_seed, explicit_matrix, field
from .model import CrystalSignal, dft_matrix

GRAM_FRAMES = ("fourier", "spatial")


@dataclass(frozen=True)
class TangentElement:
    """``W = x w^H + w x^H`` stored through its two factors."""

    anchor: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        x = check_vector(self.anchor, name="anchor")
        w = check_vector(self.direction, x.shape[0], name="direction")
        object.__setattr__(self, "anchor", x)
        object.__setattr__(self, "direction", w)

    def matrix(self):
        x, w = self.anchor, self.direction
        return np.outer(x, w.conj()) + np.outer(w, x.conj())


def apply_B_operator(W, ensemble):
    """Quadratic forms ``b^H W b`` for every measurement vector.

    Tangent elements never materialise ``W``: each entry is
    ``2 Re(<b, x> conj(<b, w>))``. Explicit matrices must be Hermitian and
    go through the dense measurement matrix.
    """
    if isinstance(W, TangentElement):
        ux = field(W.anchor, ensemble)
        uw = field(W.direction, ensemble)
        return 2.0 * np.real(ux * np.conj(uw))
    W = np.asarray(W, dtype=complex)
    if W.shape != (ensemble.n, ensemble.n):
        raise ValueError(f"W must be {ensemble.n}x{ensemble.n}")
    if np.max(np.abs(W - W.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(W))):
        raise ValueError("W must be Hermitian")
    B = explicit_matrix(ensemble)
    return np.einsum("ij,jk,ik->i", B, W, B.conj()).real


def nuclear_norm_rank2(W):
    """Sum of singular values of ``x w^H + w x^H`` in closed form.

    The two nonzero eigenvalues are
    ``Re(x^H w) +- sqrt(|x|^2 |w|^2 - Im(x^H w)^2)``; by Cauchy-Schwarz
    they have opposite signs (or one vanishes), so the nuclear norm is
    their difference.
    """
    x, w = W.anchor, W.direction
    a = np.vdot(x, w)
    disc = np.vdot(x, x).real * np.vdot(w, w).real - a.imag**2
    return float(2.0 * np.sqrt(max(disc, 0.0)))


def gram_matrix(ensemble):
    B = explicit_matrix(ensemble)
    return B.conj().T @ B


def check_gram_identity(ensemble, frame="fourier"):
    """Relative Frobenius residual of the collapsed Gram identity.

    ``B^H B`` collapses to ``F^H diag(sum_p |d_p|^2) F`` because the
    transfer functions are unitary, the DFT is unitary and the region
    selectors sum to the identity. In the ``fourier`` frame (coordinates of
    ``Fx``, where the apertures act) that is exactly a diagonal matrix.
    The ``spatial`` frame compares ``B^H B`` itself with that diagonal,
    which only holds when the aperture has constant modulus.
    """
    if frame not in GRAM_FRAMES:
        raise ValueError(f"frame must be one of {GRAM_FRAMES}")
    G = gram_matrix(ensemble)
    target = np.diag(ensemble.gram_diagonal()).astype(complex)
    if frame == "fourier":
        F = dft_matrix(ensemble.shape)
        G = F @ G @ F.conj().T
    norm = np.linalg.norm(target)
    if norm == 0:
        return float(np.linalg.norm(G))
    return float(np.linalg.norm(G - target) / norm)


def spectral_quantity(ensemble, iters=1000, tol=1e-14, seed=0):
    """``(1/m) lambda_max(B^H B)`` by power iteration on field/adjoint.

    The start vector is random: the all-ones vector is itself an
    eigenvector of ``B^H B`` and would stall the iteration.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(ensemble.n) + 1j * rng.standard_normal(ensemble.n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        y = adjoint_field(field(v, ensemble), ensemble)
        new_lam = float(np.vdot(v, y).real)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        v = y / ny
        if abs(new_lam - lam) <= tol * abs(new_lam):
            lam = new_lam
            break
        lam = new_lam
    return lam / ensemble.m


@dataclass
class ConditionReport:
    delta_target: float
    ratios: np.ndarray
    min_ratio: float
    max_ratio: float
    spectral_quantity: float
    gram_residual: float
    mode: str
    upper_ok: bool
    isotropic_scale: float = 1.0

    @property
    def scaled_min_ratio(self):
        """Smallest ratio after rescaling ``B`` so that ``(1/m) trace(B^H B)/n = 1``."""
        return self.min_ratio * self.isotropic_scale

    @property
    def scaled_max_ratio(self):
        return self.max_ratio * self.isotropic_scale


def condition_ratio(W, ensemble):
    """``(1/m) ||calB(W)||_1 / ||W||_1`` for a tangent element."""
    nuc = nuclear_norm_rank2(W)
    if nuc == 0:
        return 0.0
    return float(np.sum(np.abs(apply_B_operator(W, ensemble))) / ensemble.m / nuc)


def sample_condition1(x, ensemble, trials, seed, delta=0.5, directions=None):
    """Sample tangent elements at `x` and record the normalised ratios.

    Directions are standard complex Gaussian with per-trial seeds derived
    from (`seed`, trial); explicit `directions` replace the random draws.
    Only the upper bound ``max_ratio <= 1 + delta`` is judged.
    """
    from .solver import isotropic_scale

    xv = x.values if isinstance(x, CrystalSignal) else check_vector(x, ensemble.n, name="x")
    seed = check_seed(seed)
    if directions is None:
        trials = check_positive_int(trials, "trials")
        directions = []
        for t in range(trials):
            rng = np.random.default_rng(derive_seed(seed, t))
            directions.append(
                (rng.standard_normal(ensemble.n) + 1j * rng.standard_normal(ensemble.n)) / np.sqrt(2)
            )
    ratios = np.array([condition_ratio(TangentElement(xv, w), ensemble) for w in directions])
    gram = np.nan
    if ensemble.m * ensemble.n <= DENSE_LIMIT and ensemble.n <= 256:
        gram = check_gram_identity(ensemble)
    sq = spectral_quantity(ensemble)
    return ConditionReport(
        delta_target=float(delta),
        ratios=ratios,
        min_ratio=float(ratios.min()),
        max_ratio=float(ratios.max()),
        spectral_quantity=sq,
        gram_residual=gram,
        mode=ensemble.aperture_mode,
        upper_ok=bool(ratios.max() <= 1 + delta),
        isotropic_scale=isotropic_scale(ensemble),
    )
