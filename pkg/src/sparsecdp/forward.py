"""Coded-diffraction measurement operator.

For region ``r`` and distance ``p`` the measured field is

    F T(z_p) F^H D_p S_r F x

with unitary DFTs ``F``, a diagonal unit-modulus transfer function ``T``,
the diagonal aperture ``D_p`` and the 0/1 region selector ``S_r``.
Measurement vectors are stacked with the detector index ``i`` fastest,
then the distance ``p``, then the region ``r``.
"""
import hashlib
from dataclasses import dataclass, field as dc_field

import numpy as np

from ._validation import check_intensities, check_seed, check_vector
from .model import (
    CodedAperture,
    CrystalSignal,
    GridShape,
    RegionPartition,
    dft_matrix,
    gen_coded_aperture,
    gen_regions,
)

KERNELS = ("fresnel", "custom-unitary")
APERTURE_MODES = ("per-distance", "single")

# dense materialisation guard, in matrix entries
DENSE_LIMIT = 10**7


def normalized_frequencies(shape):
    """Squared norm of the centred normalised frequency at every grid index."""
    shape = GridShape.coerce(shape)
    axes = np.meshgrid(*[np.fft.fftfreq(d) for d in shape.dims], indexing="ij")
    return sum(a**2 for a in axes).reshape(-1)


@dataclass(frozen=True)
class TransferFunction:
    shape: GridShape
    distance: float
    values: np.ndarray
    kernel: str = "fresnel"
    wavelength: float = 1.0

    def __post_init__(self):
        values = np.array(check_vector(self.values, GridShape.coerce(self.shape).n, name="transfer values"))
        if np.max(np.abs(np.abs(values) - 1), initial=0.0) > 1e-12:
            raise ValueError("transfer function must be diagonal unitary (|T_k| = 1)")
        values.setflags(write=False)
        object.__setattr__(self, "shape", GridShape.coerce(self.shape))
        object.__setattr__(self, "values", values)


def make_transfer_function(shape, z, kernel="fresnel", wavelength=1.0, values=None):
    """Diagonal of the free-space transfer function for distance `z`.

    The Fresnel kernel is ``exp(-j pi wavelength z |nu|^2)`` where ``nu`` is
    the centred frequency in cycles per sample. ``custom-unitary`` accepts
    explicit `values`, which must have unit modulus.
    """
    shape = GridShape.coerce(shape)
    z = float(z)
    if kernel == "fresnel":
        if not wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {wavelength}")
        if z == 0:
            vals = np.ones(shape.n, dtype=complex)
        else:
            vals = np.exp(-1j * np.pi * wavelength * z * normalized_frequencies(shape))
    elif kernel == "custom-unitary":
        if values is None:
            raise ValueError("custom-unitary kernel needs explicit values")
        vals = np.asarray(values, dtype=complex)
    else:
        raise ValueError(f"unsupported kernel {kernel!r}; choose from {KERNELS}")
    return TransferFunction(shape, z, vals, kernel=kernel, wavelength=float(wavelength))


def default_distances(shape, P, wavelength=1.0):
    """Evenly spaced distances starting at the aperture plane.

    The first snapshot at ``z = 0`` records coded Fourier magnitudes; the
    spacing ``0.75 * max(dims) / wavelength`` makes the Fresnel kernel spread
    over most of the grid without being perfectly flat.
    """
    shape = GridShape.coerce(shape)
    step = 0.75 * max(shape.dims) / wavelength
    return tuple(step * p for p in range(P))


@dataclass(frozen=True, eq=False)
class SensingEnsemble:
    """Distances, apertures, transfer functions and regions of one setup."""

    shape: GridShape
    distances: tuple
    apertures: tuple
    regions: RegionPartition
    kernel: str = "fresnel"
    wavelength: float = 1.0
    transfers: tuple = None
    seed: int = None
    _cache: dict = dc_field(default_factory=dict, repr=False)

    def __post_init__(self):
        shape = GridShape.coerce(self.shape)
        distances = tuple(float(z) for z in self.distances)
        if not distances:
            raise ValueError("need at least one distance (P >= 1)")
        apertures = tuple(self.apertures)
        if len(apertures) not in (1, len(distances)):
            raise ValueError(f"need 1 or P={len(distances)} apertures, got {len(apertures)}")
        for ap in apertures:
            if not isinstance(ap, CodedAperture):
                raise TypeError("apertures must be CodedAperture instances")
            if ap.shape != shape:
                raise ValueError("aperture shape does not match the ensemble")
        if self.regions.shape != shape:
            raise ValueError("region partition shape does not match the ensemble")
        transfers = self.transfers
        if transfers is None:
            transfers = tuple(
                make_transfer_function(shape, z, self.kernel, self.wavelength) for z in distances
            )
        transfers = tuple(transfers)
        if len(transfers) != len(distances):
            raise ValueError("need one transfer function per distance")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "distances", distances)
        object.__setattr__(self, "apertures", apertures)
        object.__setattr__(self, "transfers", transfers)

        d = np.stack([ap.values for ap in apertures])
        if d.shape[0] == 1:
            d = np.repeat(d, len(distances), axis=0)
        t = np.stack([tf.values for tf in transfers]).reshape((len(distances),) + shape.dims)
        s = self.regions.selectors()
        for arr in (d, t, s):
            arr.setflags(write=False)
        self._cache.update(D=d, T=t, S=s)

    @property
    def n(self):
        return self.shape.n

    @property
    def P(self):
        return len(self.distances)

    @property
    def R(self):
        return self.regions.count

    @property
    def m(self):
        return self.n * self.R * self.P

    @property
    def aperture_mode(self):
        return "single" if len(self.apertures) == 1 else "per-distance"

    @property
    def D(self):
        """Aperture values, one row per distance (shape ``(P, n)``)."""
        return self._cache["D"]

    @property
    def T(self):
        return self._cache["T"]

    @property
    def S(self):
        return self._cache["S"]

    def gram_diagonal(self):
        """Diagonal of ``F B^H B F^H``, i.e. ``sum_p |d_{p,k}|^2``."""
        return np.sum(np.abs(self.D) ** 2, axis=0) * np.sum(self.S, axis=0)

    @property
    def id(self):
        if "id" not in self._cache:
            h = hashlib.sha1()
            h.update(repr((self.shape.dims, self.distances, self.kernel, self.wavelength)).encode())
            for arr in (self.D, self.T, self.regions.membership):
                h.update(np.ascontiguousarray(arr).tobytes())
            self._cache["id"] = h.hexdigest()[:12]
        return self._cache["id"]


def make_ensemble(
    shape,
    P=1,
    R=1,
    aperture_kind="uniform-phase",
    aperture_mode="per-distance",
    seed=0,
    distances=None,
    wavelength=1.0,
    kernel="fresnel",
    transfer_values=None,
    aperture_values=None,
    regions=None,
):
    """Build a sensing ensemble with randomly drawn apertures.

    Aperture ``p`` is drawn from a seed derived from (`seed`, p), so the
    first aperture of a per-distance ensemble equals the single aperture
    drawn with the same seed.
    """
    shape = GridShape.coerce(shape)
    seed = check_seed(seed)
    if distances is None:
        distances = default_distances(shape, P, wavelength)
    distances = tuple(float(z) for z in distances)
    P = len(distances)
    if aperture_mode not in APERTURE_MODES:
        raise ValueError(f"unsupported aperture mode {aperture_mode!r}; choose from {APERTURE_MODES}")
    count = P if aperture_mode == "per-distance" else 1
    if aperture_kind == "custom":
        vals = np.atleast_2d(np.asarray(aperture_values, dtype=complex))
        if vals.shape[0] == 1:
            vals = np.repeat(vals, count, axis=0)
        apertures = tuple(CodedAperture(shape, v, kind="custom") for v in vals[:count])
    else:
        apertures = tuple(
            gen_coded_aperture(shape, aperture_kind, derive_seed(seed, p)) for p in range(count)
        )
    if regions is None:
        regions = gen_regions(shape, R)
    elif not isinstance(regions, RegionPartition):
        membership = np.asarray(regions)
        regions = RegionPartition(shape, int(membership.max()), membership)
    transfers = None
    if kernel == "custom-unitary":
        tv = np.atleast_2d(np.asarray(transfer_values, dtype=complex))
        transfers = tuple(
            make_transfer_function(shape, z, "custom-unitary", wavelength, values=v)
            for z, v in zip(distances, tv)
        )
    return SensingEnsemble(
        shape, distances, apertures, regions, kernel=kernel, wavelength=wavelength,
        transfers=transfers, seed=seed,
    )


def derive_seed(seed, *keys):
    """Deterministic child seed for (`seed`, keys) via numpy's SeedSequence."""
    state = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys)).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


# -- measurement sets ------------------------------------------------------


@dataclass(frozen=True)
class MeasurementSet:
    """Nonnegative intensities stacked with ``i`` fastest, then ``p``, then ``r``."""

    shape: GridShape
    R: int
    P: int
    values: np.ndarray
    ensemble_id: str = None
    distances: tuple = None
    noise: dict = None

    def __post_init__(self):
        shape = GridShape.coerce(self.shape)
        values = np.array(check_intensities(self.values, shape.n * self.R * self.P))
        values.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", values)

    @property
    def m(self):
        return self.values.shape[0]

    def as_cube(self):
        """View the intensities as an ``(R, P, n)`` array."""
        return unflatten(self.values, self.R, self.P, self.shape.n)


def flatten(cube):
    """Stack an ``(R, P, n)`` array in the canonical (i, p, r) order."""
    return np.ascontiguousarray(cube).reshape(-1)


def unflatten(values, R, P, n):
    return np.asarray(values).reshape(R, P, n)


def _signal_values(x, ensemble):
    if isinstance(x, CrystalSignal):
        if x.shape != ensemble.shape:
            raise ValueError(f"signal shape {x.shape} does not match ensemble shape {ensemble.shape}")
        return x.values
    return check_vector(x, ensemble.n, name="signal")


def _as_intensities(g, ensemble):
    if isinstance(g, MeasurementSet):
        if (g.shape, g.R, g.P) != (ensemble.shape, ensemble.R, ensemble.P):
            raise ValueError("measurement layout does not match the ensemble")
        return g.values
    return check_intensities(g, ensemble.m)


# -- operators -------------------------------------------------------------


def field(x, ensemble):
    """All inner products ``<b^r_{p,i}, x>`` via the FFT factorisation."""
    x = _signal_values(x, ensemble)
    dims = ensemble.shape.dims
    axes = tuple(range(-len(dims), 0))
    xt = np.fft.fftn(x.reshape(dims), norm="ortho").reshape(-1)
    y = ensemble.S[:, None, :] * ensemble.D[None, :, :] * xt
    y = y.reshape((ensemble.R, ensemble.P) + dims)
    w = np.fft.ifftn(y, axes=axes, norm="ortho") * ensemble.T[None]
    return np.fft.fftn(w, axes=axes, norm="ortho").reshape(-1)


def adjoint_field(v, ensemble):
    """``sum_{i,p,r} v_{i,p,r} b^r_{p,i}``: the adjoint of :func:`field`."""
    v = check_vector(v, ensemble.m, name="adjoint input")
    dims = ensemble.shape.dims
    axes = tuple(range(-len(dims), 0))
    w = np.fft.ifftn(v.reshape((ensemble.R, ensemble.P) + dims), axes=axes, norm="ortho")
    u = np.fft.fftn(w * np.conj(ensemble.T)[None], axes=axes, norm="ortho")
    u = u.reshape(ensemble.R, ensemble.P, -1)
    acc = np.einsum("rpk,pk,rk->k", u, np.conj(ensemble.D), ensemble.S)
    return np.fft.ifftn(acc.reshape(dims), norm="ortho").reshape(-1)


def forward(x, ensemble):
    """Noiseless coded diffraction intensities ``|<b, x>|^2``."""
    f = field(x, ensemble)
    return MeasurementSet(
        ensemble.shape, ensemble.R, ensemble.P, np.abs(f) ** 2,
        ensemble_id=ensemble.id, distances=ensemble.distances,
    )


def explicit_matrix(ensemble):
    """Dense ``m x n`` matrix whose rows are ``(b^r_{p,i})^H``.

    Assembled from the sampling vectors ``a_{p,i} = conj(D) F conj(T) f_i``
    and ``b = F^H S_r a`` with a dense DFT matrix; no FFTs are involved.
    """
    n, m = ensemble.n, ensemble.m
    if m * n > DENSE_LIMIT:
        raise ValueError(f"explicit matrix would have {m * n} entries (limit {DENSE_LIMIT})")
    F = dft_matrix(ensemble.shape)
    FH = F.conj().T
    # f_i are the columns of F^H, so <f_i, x> = (F x)_i
    rows = []
    for r in range(ensemble.R):
        S = np.diag(ensemble.S[r])
        for p in range(ensemble.P):
            D = np.diag(ensemble.D[p])
            T = np.diag(ensemble.T[p].reshape(-1))
            A = D.conj() @ F @ T.conj() @ FH
            Bcols = FH @ S @ A
            rows.append(Bcols.conj().T)
    return np.vstack(rows)


def add_noise(g, snr_db, seed):
    """Add white Gaussian noise to intensities at a given SNR.

    The noise level solves ``snr_db = 20 log10(||g||_2 / (m sigma))`` and
    each entry receives an independent ``N(0, sigma^2)`` draw. Negative
    results are clamped to zero.
    """
    seed = check_seed(seed)
    snr_db = float(snr_db)
    values = np.array(g.values, dtype=float)
    if np.isinf(snr_db) and snr_db > 0:
        sigma = 0.0
        noisy = values
    else:
        if not np.isfinite(snr_db):
            raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")
        sigma = float(np.linalg.norm(values) / (g.m * 10 ** (snr_db / 20)))
        rng = np.random.default_rng(seed)
        noisy = np.maximum(values + sigma * rng.standard_normal(g.m), 0.0)
    return MeasurementSet(
        g.shape, g.R, g.P, noisy, ensemble_id=g.ensemble_id, distances=g.distances,
        noise={"snr_db": snr_db, "sigma": sigma, "seed": seed},
    )
