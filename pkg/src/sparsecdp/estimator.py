"""scikit-learn style wrappers around the forward model and the solver.

Rows of ``X`` are individual signals (for :class:`CDPMeasurement`) or
individual measurement vectors (for :class:`SparseCDPRetriever`), so the two
compose in a :class:`sklearn.pipeline.Pipeline`. scikit-learn's own
``check_array`` rejects complex input, hence the local validators.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .forward import MeasurementSet, SensingEnsemble, add_noise, field
from .solver import SolverParams, reconstruct


def check_signal_rows(X, n):
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array, got {X.ndim} dimensions")
    if X.shape[1] != n:
        raise ValueError(f"X has {X.shape[1]} features, expected {n}")
    X = X.astype(complex)
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite entries")
    return X


def check_measurement_rows(X, m):
    if isinstance(X, MeasurementSet):
        X = X.values[None, :]
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != m:
        raise ValueError(f"expected measurement rows of length {m}, got shape {X.shape}")
    if np.iscomplexobj(X):
        if np.any(X.imag != 0):
            raise ValueError("intensities must be real")
        X = X.real
    X = X.astype(float)
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite entries")
    if np.any(X < 0):
        raise ValueError("intensities must be nonnegative")
    return X


def _check_ensemble(ensemble):
    if not isinstance(ensemble, SensingEnsemble):
        raise TypeError("ensemble must be a SensingEnsemble")
    return ensemble


class CDPMeasurement(TransformerMixin, BaseEstimator):
    """Map signals to coded diffraction intensities, optionally noisy."""

    def __init__(self, ensemble=None, snr_db=None, seed=0):
        self.ensemble = ensemble
        self.snr_db = snr_db
        self.seed = seed

    def fit(self, X, y=None):
        ens = _check_ensemble(self.ensemble)
        check_signal_rows(X, ens.n)
        self.n_features_in_ = ens.n
        return self

    def transform(self, X):
        if not hasattr(self, "n_features_in_"):
            raise NotFittedError("CDPMeasurement is not fitted")
        ens = self.ensemble
        X = check_signal_rows(X, ens.n)
        out = np.empty((X.shape[0], ens.m))
        for k, x in enumerate(X):
            g = np.abs(field(x, ens)) ** 2
            if self.snr_db is not None:
                ms = MeasurementSet(ens.shape, ens.R, ens.P, g)
                g = add_noise(ms, self.snr_db, self.seed + k).values
            out[k] = g
        return out


class SparseCDPRetriever(TransformerMixin, BaseEstimator):
    """Recover Fourier-sparse signals from coded diffraction intensities.

    ``fit`` reconstructs every row of ``X`` and keeps the results in
    ``estimates_`` and ``reports_``; ``transform`` reconstructs new rows with
    the same settings.
    """

    def __init__(self, ensemble=None, sparsity=1, tau=0.3, gamma=0.8, gamma1=0.5,
                 mu0=60.0, n_iter=800, alpha_y=3.0, normalization="isotropic", early_stop=False):
        self.ensemble = ensemble
        self.sparsity = sparsity
        self.tau = tau
        self.gamma = gamma
        self.gamma1 = gamma1
        self.mu0 = mu0
        self.n_iter = n_iter
        self.alpha_y = alpha_y
        self.normalization = normalization
        self.early_stop = early_stop

    def _params(self):
        return SolverParams(
            s=self.sparsity, tau=self.tau, gamma=self.gamma, gamma1=self.gamma1, mu0=self.mu0,
            T=self.n_iter, alpha_y=self.alpha_y, normalization=self.normalization,
            early_stop=self.early_stop,
        )

    def _solve(self, X):
        params = self._params()
        reports = [reconstruct(g, self.ensemble, params) for g in X]
        return np.stack([r.estimate for r in reports]), reports

    def fit(self, X, y=None):
        ens = _check_ensemble(self.ensemble)
        X = check_measurement_rows(X, ens.m)
        self.estimates_, self.reports_ = self._solve(X)
        self.n_features_in_ = ens.m
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).estimates_

    def transform(self, X):
        if not hasattr(self, "n_features_in_"):
            raise NotFittedError("SparseCDPRetriever is not fitted")
        X = check_measurement_rows(X, self.n_features_in_)
        return self._solve(X)[0]
