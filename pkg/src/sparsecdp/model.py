"""Problem primitives: grids, Fourier-sparse signals, coded apertures, regions.

All Fourier transforms in this package are unitary and act on the grid in
row-major (C) order, so ``F^H F = F F^H = I`` holds exactly in exact
arithmetic and to round-off in floating point.
"""
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_seed, check_vector

APERTURE_KINDS = ("block-unblock", "uniform-phase", "custom")
LATTICE_KINDS = ("rock-salt", "custom-motif")

# relative threshold used when counting Fourier coefficients
SPARSITY_TOL = 1e-10


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridShape:
    """Extent of a d-dimensional sampling grid."""

    dims: tuple

    def __post_init__(self):
        dims = self.dims
        if isinstance(dims, (int, np.integer)):
            dims = (dims,)
        dims = tuple(check_positive_int(d, "grid dim") for d in dims)
        if not dims:
            raise ValueError("dims must be non-empty")
        object.__setattr__(self, "dims", dims)

    @property
    def n(self):
        return int(np.prod(self.dims))

    @property
    def ndim(self):
        return len(self.dims)

    @classmethod
    def coerce(cls, shape):
        if isinstance(shape, cls):
            return shape
        return cls(shape)

    def __str__(self):
        return "x".join(str(d) for d in self.dims)


# -- unitary DFT on a flattened grid -------------------------------------


def dft(v, shape):
    """Unitary DFT of a flattened grid vector."""
    shape = GridShape.coerce(shape)
    return np.fft.fftn(np.reshape(v, shape.dims), norm="ortho").reshape(-1)


def idft(v, shape):
    """Inverse unitary DFT of a flattened grid vector."""
    shape = GridShape.coerce(shape)
    return np.fft.ifftn(np.reshape(v, shape.dims), norm="ortho").reshape(-1)


def dft_matrix(shape):
    """Dense unitary DFT matrix acting on row-major flattened vectors.

    Built as a Kronecker product of 1-D DFT matrices, without any FFT call,
    so it can serve as an independent oracle for :func:`dft`.
    """
    shape = GridShape.coerce(shape)
    mat = np.ones((1, 1), dtype=complex)
    for d in shape.dims:
        k = np.arange(d)
        f1 = np.exp(-2j * np.pi * np.outer(k, k) / d) / np.sqrt(d)
        mat = np.kron(mat, f1)
    return mat


def fourier_sparsity(values, shape, tol=SPARSITY_TOL):
    """Count Fourier coefficients above ``tol`` times the largest one."""
    coeffs = np.abs(dft(values, shape))
    peak = coeffs.max(initial=0.0)
    if peak == 0:
        return 0
    return int(np.count_nonzero(coeffs > tol * peak))


# -- data types -----------------------------------------------------------


@dataclass(frozen=True)
class CrystalSignal:
    """Complex field on a grid together with its Fourier sparsity."""

    shape: GridShape
    values: np.ndarray
    sparsity: int
    seed: int = None
    kind: str = "signal"

    def __post_init__(self):
        shape = GridShape.coerce(self.shape)
        values = check_vector(self.values, shape.n, name="signal values")
        if not 0 <= self.sparsity <= shape.n:
            raise ValueError(f"sparsity must lie in [0, {shape.n}], got {self.sparsity}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", _frozen(values))

    @property
    def fourier(self):
        return dft(self.values, self.shape)

    @property
    def support(self):
        """Flat indices of the nonzero Fourier coefficients."""
        coeffs = np.abs(self.fourier)
        peak = coeffs.max(initial=0.0)
        if peak == 0:
            return np.array([], dtype=int)
        return np.flatnonzero(coeffs > SPARSITY_TOL * peak)


@dataclass(frozen=True)
class CodedAperture:
    """Per-grid-point complex modulation with ``|d| <= 1``."""

    shape: GridShape
    values: np.ndarray
    kind: str = "custom"
    seed: int = None

    def __post_init__(self):
        shape = GridShape.coerce(self.shape)
        values = check_vector(self.values, shape.n, name="aperture values")
        if self.kind not in APERTURE_KINDS:
            raise ValueError(f"unsupported aperture kind {self.kind!r}")
        if np.any(np.abs(values) > 1 + 1e-12):
            raise ValueError("aperture entries must satisfy |d| <= 1")
        if self.kind == "block-unblock" and not np.all(np.isin(values, (0, 1))):
            raise ValueError("block-unblock apertures take values in {0, 1}")
        if self.kind == "uniform-phase" and np.max(np.abs(np.abs(values) - 1)) > 1e-12:
            raise ValueError("uniform-phase apertures must have unit modulus")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", _frozen(values))


@dataclass(frozen=True)
class RegionPartition:
    """Disjoint cover of the flat grid indices by regions ``1..count``."""

    shape: GridShape
    count: int
    membership: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = GridShape.coerce(self.shape)
        count = check_positive_int(self.count, "region count")
        membership = np.asarray(self.membership).reshape(-1)
        if membership.shape[0] != shape.n:
            raise ValueError(f"membership has length {membership.shape[0]}, expected {shape.n}")
        if not np.issubdtype(membership.dtype, np.integer):
            if np.any(membership != np.round(membership)):
                raise ValueError("membership must be integer valued")
        membership = membership.astype(np.int64)
        if membership.min() < 1 or membership.max() > count:
            raise ValueError(f"membership entries must lie in 1..{count}")
        if count <= shape.n and len(np.unique(membership)) != count:
            raise ValueError("every region must be nonempty")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "count", count)
        object.__setattr__(self, "membership", _frozen(membership))

    def selector(self, r):
        """Diagonal of the 0/1 selection matrix for region ``r`` (1-based)."""
        return (self.membership == r).astype(float)

    def selectors(self):
        return np.stack([self.selector(r) for r in range(1, self.count + 1)])


# -- generators ------------------------------------------------------------


def gen_sparse_signal(shape, s, seed):
    """Random signal with exactly `s` nonzero Fourier coefficients.

    The support is drawn uniformly without replacement and the coefficients
    are standard circular complex Gaussians (unit variance).
    """
    shape = GridShape.coerce(shape)
    seed = check_seed(seed)
    if isinstance(s, bool) or not isinstance(s, (int, np.integer)) or not 1 <= s <= shape.n:
        raise ValueError(f"invalid sparsity {s!r}: need 1 <= s <= {shape.n}")
    rng = np.random.default_rng(seed)
    support = rng.choice(shape.n, size=s, replace=False)
    coeffs = (rng.standard_normal(s) + 1j * rng.standard_normal(s)) / np.sqrt(2)
    xt = np.zeros(shape.n, dtype=complex)
    xt[support] = coeffs
    return CrystalSignal(shape, idft(xt, shape), int(s), seed=seed)


def gen_coded_aperture(shape, kind, seed=0, values=None):
    """Draw an i.i.d. coded aperture from one of the supported ensembles.

    ``block-unblock`` entries are Bernoulli(1/2) on {0, 1};
    ``uniform-phase`` entries are ``exp(j theta)`` with theta uniform on
    [0, 2 pi). ``custom`` takes explicit `values`.
    """
    shape = GridShape.coerce(shape)
    if kind == "custom":
        if values is None:
            raise ValueError("custom apertures need explicit values")
        return CodedAperture(shape, values, kind="custom")
    if kind not in APERTURE_KINDS:
        raise ValueError(f"unsupported aperture kind {kind!r}; choose from {APERTURE_KINDS}")
    seed = check_seed(seed)
    rng = np.random.default_rng(seed)
    if kind == "block-unblock":
        vals = rng.integers(0, 2, size=shape.n).astype(complex)
    else:
        theta = rng.uniform(0.0, 2 * np.pi, size=shape.n)
        vals = np.exp(1j * theta)
    return CodedAperture(shape, vals, kind=kind, seed=seed)


def gen_regions(shape, R):
    """Split the flat index range into `R` contiguous blocks.

    Blocks have ``n // R`` points each; the last block absorbs the remainder.
    """
    shape = GridShape.coerce(shape)
    R = check_positive_int(R, "R")
    if R > shape.n:
        raise ValueError(f"cannot form {R} nonempty regions on {shape.n} points")
    size = shape.n // R
    membership = np.minimum(np.arange(shape.n) // size, R - 1) + 1
    return RegionPartition(shape, R, membership)


def gen_crystal_lattice(shape, lattice="rock-salt", amplitudes=(1.0, 0.5), spacing=1, motif=None):
    """Periodic point lattice, hence sparse in the Fourier domain.

    ``rock-salt`` places sites every `spacing` points along each axis and
    alternates two species (amplitudes ``a1`` and ``a2``) by the parity of
    the site index sum, giving a period of ``2 * spacing``. ``custom-motif``
    tiles the array `motif` over the grid.
    """
    shape = GridShape.coerce(shape)
    if lattice == "rock-salt":
        spacing = check_positive_int(spacing, "spacing")
        a1, a2 = amplitudes
        cell = np.zeros((2 * spacing,) * shape.ndim, dtype=complex)
        for idx in np.ndindex(*((2,) * shape.ndim)):
            site = tuple(i * spacing for i in idx)
            cell[site] = a1 if sum(idx) % 2 == 0 else a2
    elif lattice == "custom-motif":
        if motif is None:
            raise ValueError("custom-motif lattice needs a motif array")
        cell = np.asarray(motif, dtype=complex)
        if cell.ndim == 1 and shape.ndim > 1:
            cell = cell.reshape((-1,) + (1,) * (shape.ndim - 1))
        if cell.ndim != shape.ndim:
            raise ValueError("motif dimensionality must match the grid")
    else:
        raise ValueError(f"unsupported lattice {lattice!r}; choose from {LATTICE_KINDS}")

    for d, p in zip(shape.dims, cell.shape):
        if d % p:
            raise ValueError(f"lattice period {p} does not divide grid dim {d}")
    reps = tuple(d // p for d, p in zip(shape.dims, cell.shape))
    values = np.tile(cell, reps).reshape(-1)
    return CrystalSignal(shape, values, fourier_sparsity(values, shape), kind=lattice)
