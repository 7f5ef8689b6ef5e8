"""Sparse phase retrieval by smoothed, hard-thresholded Wirtinger iterations.

The reconstruction has two stages. A truncated spectral initialiser picks
the `s` most energetic Fourier coordinates and takes the leading
eigenvector of a weighted covariance restricted to them. The refinement
then alternates a gradient step on the smoothed amplitude objective

    f(z) = (1/m) sum (sqrt(g) - sqrt(|<b, z>|^2 + mu^2))^2

with hard thresholding in the Fourier domain, shrinking ``mu`` by a
constant factor whenever the gradient becomes small relative to it.
"""
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import check_intensities, check_positive_int, check_unit_interval, check_vector
from .forward import MeasurementSet, adjoint_field
from .forward import field as measure_field
from .metrics import relative_error
from .model import dft, idft

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("isotropic", "none")


class DivergenceError(RuntimeError):
    """Raised when an iterate stops being finite."""

    def __init__(self, iteration):
        self.iteration = iteration
        super().__init__(f"iterate became non-finite at iteration {iteration}")


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class SolverParams:
    """Algorithm constants; defaults are cross-validated reference values."""

    s: int
    tau: float = 0.3
    gamma: float = 0.8
    gamma1: float = 0.5
    mu0: float = 60.0
    T: int = 800
    alpha_y: float = 3.0
    normalization: str = "isotropic"
    power_iters: int = 200
    power_tol: float = 1e-10
    early_stop: bool = False

    def __post_init__(self):
        check_positive_int(self.s, "s")
        check_positive_int(self.T, "T")
        check_positive_int(self.power_iters, "power_iters")
        check_unit_interval(self.tau, "tau")
        check_unit_interval(self.gamma, "gamma")
        check_unit_interval(self.gamma1, "gamma1")
        if not self.mu0 > 0:
            raise ValueError(f"mu0 must be positive, got {self.mu0}")
        if not self.alpha_y > 0:
            raise ValueError(f"alpha_y must be positive, got {self.alpha_y}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")

    def to_dict(self):
        return asdict(self)


@dataclass
class ReconstructionReport:
    estimate: np.ndarray
    fourier_estimate: np.ndarray
    initial_estimate: np.ndarray
    mu_trace: np.ndarray
    grad_norm_trace: np.ndarray
    objective_trace: np.ndarray
    error_trace: np.ndarray = None
    init_correlation: float = None
    iterations_run: int = 0
    scale: float = 1.0
    params: SolverParams = None
    meta: dict = field(default_factory=dict)

    @property
    def final_error(self):
        if self.error_trace is None or len(self.error_trace) == 0:
            return None
        return float(self.error_trace[-1])


def smoothing_phi(w, mu):
    """``sqrt(w^2 + mu^2)``, evaluated without intermediate overflow."""
    return np.hypot(w, mu)


def _intensities(g, ensemble):
    if isinstance(g, MeasurementSet):
        if (g.shape, g.R, g.P) != (ensemble.shape, ensemble.R, ensemble.P):
            raise ValueError("measurement layout does not match the ensemble")
        return g.values
    return check_intensities(g, ensemble.m)


def isotropic_scale(ensemble):
    """Factor ``c^2`` that makes ``(1/m) trace(c^2 B^H B) / n`` equal one.

    With unitary transforms ``B^H B`` has eigenvalues ``sum_p |d_{p,k}|^2``,
    so the raw operator is ``m / P`` times smaller than a unit-variance
    Gaussian ensemble; the default step size is tuned for the latter.
    """
    mean_gain = float(np.mean(ensemble.gram_diagonal()))
    if mean_gain == 0:
        raise DegenerateDataError("every aperture entry is zero")
    return ensemble.m / mean_gain


def objective(z, g, ensemble, mu, scale=1.0):
    """Smoothed amplitude objective; equals the unsmoothed one at ``mu = 0``.

    `scale` multiplies every ``|b|^2`` and intensity, as used internally by
    :func:`reconstruct`.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    gv = _intensities(g, ensemble)
    u = np.sqrt(scale) * measure_field(z, ensemble)
    return float(np.mean((np.sqrt(scale * gv) - smoothing_phi(np.abs(u), mu)) ** 2))


def gradient(z, g, ensemble, mu, scale=1.0):
    """Wirtinger gradient ``(2/m) sum (u - sqrt(g) u / phi_mu(|u|)) b``.

    ``u = <b, z>``. The returned vector is twice the derivative of
    :func:`objective` with respect to ``conj(z)``, so the directional
    derivative along ``h`` is ``Re <gradient, h>``.
    """
    gv = _intensities(g, ensemble)
    return _Problem(gv, ensemble, scale).gradient(check_vector(z, ensemble.n, name="z"), mu)[1]


class _Problem:
    """Scaled data and ensemble bundled for repeated objective/gradient calls."""

    def __init__(self, gv, ensemble, scale):
        self.ensemble = ensemble
        self.c = np.sqrt(scale)
        self.sqrt_g = np.sqrt(scale * gv)
        self.m = ensemble.m

    def gradient(self, z, mu):
        u = self.c * measure_field(z, self.ensemble)
        phi = smoothing_phi(np.abs(u), mu)
        if mu <= 0 and np.any(phi == 0):
            raise ValueError("mu = 0 with a vanishing field entry: gradient undefined")
        weights = u - self.sqrt_g * u / phi
        value = float(np.mean((self.sqrt_g - phi) ** 2))
        grad = (2.0 / self.m) * self.c * adjoint_field(weights, self.ensemble)
        return value, grad


def hard_threshold(w, s):
    """Keep the `s` largest-modulus entries; ties go to the lowest index."""
    w = np.asarray(w)
    n = w.shape[0]
    if not 0 <= s <= n:
        raise ValueError(f"s must lie in [0, {n}], got {s}")
    out = np.zeros_like(w)
    if s == 0:
        return out
    keep = np.argsort(-np.abs(w), kind="stable")[:s]
    out[keep] = w[keep]
    return out


def support_scores(g, ensemble):
    """Per-coordinate scores ``(1/m) sum g |(F b)_q|^2``.

    In Fourier coordinates a measurement vector is a shifted copy of the
    propagation kernel times the aperture and region selector, so each
    (p, r) contribution is a circular cross-correlation of the intensities
    with ``|kernel_p|^2``.
    """
    gv = _intensities(g, ensemble)
    dims = ensemble.shape.dims
    axes = tuple(range(-len(dims), 0))
    n = ensemble.n
    # kernel of F diag(T_p) F^H is F(T_p) / sqrt(n)
    kern = np.fft.fftn(ensemble.T, axes=axes, norm="ortho") / np.sqrt(n)
    kspec = np.fft.fftn(np.abs(kern) ** 2, axes=axes)
    gcube = gv.reshape((ensemble.R, ensemble.P) + dims)
    corr = np.fft.ifftn(np.fft.fftn(gcube, axes=axes) * np.conj(kspec)[None], axes=axes).real
    corr = corr.reshape(ensemble.R, ensemble.P, n)
    scores = np.einsum("rpq,pq,rq->q", corr, np.abs(ensemble.D) ** 2, ensemble.S)
    return scores / ensemble.m


def select_support(g, ensemble, s):
    """Indices of the `s` largest support scores, lowest index first on ties."""
    check_positive_int(s, "s")
    if s > ensemble.n:
        raise ValueError(f"s must be <= n = {ensemble.n}")
    scores = support_scores(g, ensemble)
    return np.sort(np.argsort(-scores, kind="stable")[:s])


def leading_eigenvector(H, iters=200, tol=1e-10):
    """Power iteration from the all-ones vector.

    Stops after `iters` steps or once the Rayleigh quotient changes by less
    than `tol` relative to itself. Returns ``(eigenvalue, unit vector)``; a
    zero matrix yields ``(0, zeros)``.
    """
    v = np.ones(H.shape[0], dtype=complex) / np.sqrt(H.shape[0])
    lam = 0.0
    for _ in range(iters):
        y = H @ v
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0, np.zeros_like(v)
        new_lam = float(np.vdot(v, y).real)
        v = y / ny
        if abs(new_lam - lam) <= tol * abs(new_lam):
            lam = new_lam
            break
        lam = new_lam
    return lam, v


def _restricted_columns(ensemble, support, c):
    """Columns of ``c B F^H`` at `support`: row entries are ``conj((F b)_q)``."""
    cols = np.empty((ensemble.m, len(support)), dtype=complex)
    e = np.zeros(ensemble.n, dtype=complex)
    for j, q in enumerate(support):
        e[q] = 1.0
        cols[:, j] = c * measure_field(idft(e, ensemble.shape), ensemble)
        e[q] = 0.0
    return cols


def spectral_init(g, ensemble, params, scale=None):
    """Truncated sparse spectral initialiser.

    Returns the spatial-domain starting point
    ``F^H(sqrt((n/m) phi^2) z0)`` with ``phi^2 = mean(g)`` and ``z0`` the
    unit leading eigenvector of the weighted covariance of the measurement
    vectors restricted to the selected support, built from measurements not
    exceeding ``alpha_y^2 phi^2``. All-zero data gives the zero vector.
    """
    if scale is None:
        scale = isotropic_scale(ensemble) if params.normalization == "isotropic" else 1.0
    gv = scale * _intensities(g, ensemble)
    n, m = ensemble.n, ensemble.m
    if params.s > n:
        raise ValueError(f"s must be <= n = {n}")
    phi2 = float(np.mean(gv))
    if phi2 == 0:
        return np.zeros(n, dtype=complex)
    keep = gv <= params.alpha_y**2 * phi2
    if not np.any(keep):
        raise DegenerateDataError("truncation removed every measurement")
    support = select_support(gv, ensemble, params.s)
    cols = _restricted_columns(ensemble, support, np.sqrt(scale))
    weighted = cols * (gv * keep)[:, None]
    H = cols.conj().T @ weighted / m
    _, v = leading_eigenvector(H, params.power_iters, params.power_tol)
    zt = np.zeros(n, dtype=complex)
    zt[support] = np.sqrt(n / m * phi2) * v
    return idft(zt, ensemble.shape)


def reconstruct(g, ensemble, params, ground_truth=None, z0=None, callback=None):
    """Run the full two-stage reconstruction and return a report.

    When `ground_truth` is given the relative error of every iterate is
    recorded. `z0` overrides the spectral initialiser. `callback`, if given,
    is called as ``callback(t, z, fourier_z, mu)`` after every iteration
    with the smoothing parameter ``mu`` used for that iteration.
    """
    gv = _intensities(g, ensemble)
    if params.s > ensemble.n:
        raise ValueError(f"s must be <= n = {ensemble.n}")
    scale = isotropic_scale(ensemble) if params.normalization == "isotropic" else 1.0
    truth = None
    if ground_truth is not None:
        truth = getattr(ground_truth, "values", ground_truth)
        truth = check_vector(truth, ensemble.n, name="ground truth")

    if z0 is None:
        z = spectral_init(gv, ensemble, params, scale=scale)
    else:
        z = check_vector(z0, ensemble.n, name="z0").copy()
    init = z.copy()
    init_corr = None
    if truth is not None:
        denom = np.linalg.norm(z) * np.linalg.norm(truth)
        init_corr = float(abs(np.vdot(z, truth)) / denom) if denom > 0 else 0.0

    problem = _Problem(gv, ensemble, scale)
    mu = float(params.mu0)
    _, grad = problem.gradient(z, mu)
    mus, gnorms, objs, errs = [], [], [], []
    zt = dft(z, ensemble.shape)
    quiet = 0
    for t in range(params.T):
        mus.append(mu)
        zt = hard_threshold(dft(z - params.tau * grad, ensemble.shape), params.s)
        z_new = idft(zt, ensemble.shape)
        if not np.all(np.isfinite(z_new)):
            raise DivergenceError(t)
        value, grad = problem.gradient(z_new, mu)
        gnorm = float(np.linalg.norm(grad))
        if not np.isfinite(gnorm):
            raise DivergenceError(t)
        gnorms.append(gnorm)
        objs.append(value)
        if gnorm < params.gamma * mu:
            mu = mu * params.gamma1
            _, grad = problem.gradient(z_new, mu)
        if truth is not None:
            errs.append(relative_error(z_new, truth))
        if callback is not None:
            callback(t, z_new, zt, mus[-1])
        if params.early_stop:
            nz = np.linalg.norm(z_new)
            change = np.linalg.norm(z_new - z) / nz if nz > 0 else 0.0
            quiet = quiet + 1 if change < 1e-12 else 0
        z = z_new
        if params.early_stop and quiet >= 10:
            logger.debug("early stop at iteration %d", t)
            break

    return ReconstructionReport(
        estimate=z,
        fourier_estimate=zt,
        initial_estimate=init,
        mu_trace=np.array(mus),
        grad_norm_trace=np.array(gnorms),
        objective_trace=np.array(objs),
        error_trace=np.array(errs) if truth is not None else None,
        init_correlation=init_corr,
        iterations_run=len(mus),
        scale=scale,
        params=params,
        meta={"ensemble_id": ensemble.id, "aperture_mode": ensemble.aperture_mode, "shape": ensemble.shape},
    )
