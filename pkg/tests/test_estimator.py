import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from sparsecdp.estimator import CDPMeasurement, SparseCDPRetriever
from sparsecdp.forward import forward, make_ensemble
from sparsecdp.metrics import relative_error
from sparsecdp.model import gen_sparse_signal


@pytest.fixture(scope="module")
def setup():
    ens = make_ensemble((32,), P=2, seed=4)
    X = np.stack([gen_sparse_signal((32,), 3, seed=k).values for k in range(3)])
    return ens, X


def test_measurement_transformer(setup):
    ens, X = setup
    G = CDPMeasurement(ensemble=ens).fit_transform(X)
    assert G.shape == (3, ens.m)
    np.testing.assert_array_equal(G[1], forward(X[1], ens).values)
    noisy = CDPMeasurement(ensemble=ens, snr_db=30, seed=1).fit_transform(X)
    assert not np.array_equal(noisy, G) and np.all(noisy >= 0)


def test_pipeline_recovers(setup):
    ens, X = setup
    pipe = make_pipeline(CDPMeasurement(ensemble=ens), SparseCDPRetriever(ensemble=ens, sparsity=3, n_iter=300))
    Z = pipe.fit_transform(X)
    for z, x in zip(Z, X):
        assert relative_error(z, x) < 1e-8
    assert len(pipe[-1].reports_) == 3


def test_params_and_clone(setup):
    ens, _ = setup
    est = SparseCDPRetriever(ensemble=ens, sparsity=5, tau=0.2)
    params = est.get_params()
    assert params["sparsity"] == 5 and params["tau"] == 0.2
    c = clone(est).set_params(mu0=10.0)
    assert c.mu0 == 10.0 and c.ensemble.id == ens.id


def test_validation(setup):
    ens, X = setup
    with pytest.raises(NotFittedError):
        SparseCDPRetriever(ensemble=ens).transform(np.ones(ens.m))
    with pytest.raises(ValueError):
        SparseCDPRetriever(ensemble=ens, sparsity=2).fit(-np.ones(ens.m))
    with pytest.raises(ValueError):
        CDPMeasurement(ensemble=ens).fit(X[:, :5])
    with pytest.raises(TypeError):
        CDPMeasurement().fit(X)
