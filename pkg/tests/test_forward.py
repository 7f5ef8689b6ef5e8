import numpy as np
import pytest

from sparsecdp.forward import (
    MeasurementSet,
    add_noise,
    adjoint_field,
    default_distances,
    derive_seed,
    explicit_matrix,
    field,
    flatten,
    forward,
    make_ensemble,
    make_transfer_function,
    unflatten,
)
from sparsecdp.model import dft, gen_sparse_signal, idft

from conftest import crandn


@pytest.mark.parametrize("shape,P,R,mode,kind", [
    ((12,), 2, 2, "per-distance", "uniform-phase"),
    ((12,), 3, 1, "single", "block-unblock"),
    ((4, 3), 2, 3, "per-distance", "block-unblock"),
    ((2, 2, 3), 1, 4, "single", "uniform-phase"),
])
def test_field_and_adjoint_match_dense(shape, P, R, mode, kind, rng):
    ens = make_ensemble(shape, P=P, R=R, aperture_kind=kind, aperture_mode=mode, seed=5)
    B = explicit_matrix(ens)
    assert B.shape == (ens.m, ens.n)
    x = crandn(rng, ens.n)
    v = crandn(rng, ens.m)
    np.testing.assert_allclose(field(x, ens), B @ x, atol=1e-12)
    np.testing.assert_allclose(adjoint_field(v, ens), B.conj().T @ v, atol=1e-12)


def test_adjoint_identity(small_ensemble, rng):
    ens = small_ensemble
    x, v = crandn(rng, ens.n), crandn(rng, ens.m)
    lhs = np.vdot(v, field(x, ens))
    rhs = np.vdot(adjoint_field(v, ens), x)
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_measurement_ordering(rng):
    # row k of the stacked vector is (i, p, r) with i fastest
    ens = make_ensemble((6,), P=2, R=3, seed=1)
    x = crandn(rng, 6)
    g = forward(x, ens)
    cube = g.as_cube()
    assert cube.shape == (3, 2, 6)
    for r in range(3):
        for p in range(2):
            single = make_ensemble((6,), P=1, aperture_kind="custom",
                                   aperture_values=ens.D[p], distances=[ens.distances[p]])
            # region r keeps only the Fourier coefficients in S_r
            xr = idft(ens.S[r] * dft(x, (6,)), (6,))
            expect = np.abs(field(xr, single)) ** 2
            np.testing.assert_allclose(cube[r, p], expect, atol=1e-12)
    assert np.array_equal(flatten(cube), g.values)
    assert np.array_equal(unflatten(g.values, 3, 2, 6), cube)


def test_transfer_function():
    T = make_transfer_function((8,), 0.0)
    assert np.array_equal(T.values, np.ones(8))
    T = make_transfer_function((8, 8), 3.5, wavelength=0.7)
    np.testing.assert_allclose(np.abs(T.values), 1.0, atol=1e-14)
    with pytest.raises(ValueError):
        make_transfer_function((4,), 1.0, kernel="custom-unitary", values=[1, 1, 0.5, 1])
    with pytest.raises(ValueError):
        make_transfer_function((4,), 1.0, kernel="bogus")


def test_default_distances_start_at_zero():
    z = default_distances((128,), 3)
    assert z[0] == 0.0 and len(z) == 3
    assert np.all(np.diff(z) > 0)


def test_single_mode_repeats_aperture():
    ens = make_ensemble((8,), P=3, aperture_mode="single", seed=2)
    assert len(ens.apertures) == 1
    assert np.array_equal(ens.D[0], ens.D[2])
    per = make_ensemble((8,), P=3, seed=2)
    assert np.array_equal(per.D[0], ens.D[0])
    assert not np.array_equal(per.D[1], per.D[0])


def test_ensemble_id_tracks_content():
    a = make_ensemble((8,), P=2, seed=1)
    assert a.id == make_ensemble((8,), P=2, seed=1).id
    assert a.id != make_ensemble((8,), P=2, seed=2).id


def test_derive_seed_distinct():
    seeds = {derive_seed(0, k) for k in range(100)} | {derive_seed(1, k) for k in range(100)}
    assert len(seeds) == 200
    assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)


def test_forward_accepts_signal_object(small_ensemble):
    x = gen_sparse_signal((12,), 3, seed=0)
    g = forward(x, small_ensemble)
    assert g.m == small_ensemble.m and g.ensemble_id == small_ensemble.id
    assert np.all(g.values >= 0)
    with pytest.raises(ValueError):
        forward(gen_sparse_signal((8,), 3, seed=0), small_ensemble)


def test_noise_level_and_clamp(small_ensemble):
    g = forward(gen_sparse_signal((12,), 3, seed=0), small_ensemble)
    clean = add_noise(g, np.inf, seed=1)
    assert np.array_equal(clean.values, g.values) and clean.noise["sigma"] == 0
    noisy = add_noise(g, 20.0, seed=1)
    assert np.all(noisy.values >= 0)
    sigma = noisy.noise["sigma"]
    assert sigma == pytest.approx(np.linalg.norm(g.values) / (g.m * 10.0))
    assert np.array_equal(noisy.values, add_noise(g, 20.0, seed=1).values)
    with pytest.raises(ValueError):
        add_noise(g, np.nan, seed=1)


def test_measurement_set_validation():
    with pytest.raises(ValueError):
        MeasurementSet((4,), 1, 1, [1, 2, -1, 0])
    with pytest.raises(ValueError):
        MeasurementSet((4,), 1, 2, [1, 2, 1, 0])


def test_dense_guard():
    ens = make_ensemble((64, 64), P=4, R=1, seed=0)
    with pytest.raises(ValueError, match="limit"):
        explicit_matrix(ens)
