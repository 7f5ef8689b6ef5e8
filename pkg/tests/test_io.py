import io

import numpy as np
import pytest

from sparsecdp import io as sio
from sparsecdp.forward import add_noise, forward, make_ensemble
from sparsecdp.guarantees import sample_condition1
from sparsecdp.model import gen_coded_aperture, gen_crystal_lattice, gen_regions, gen_sparse_signal
from sparsecdp.solver import SolverParams, reconstruct


def test_signal_round_trip(tmp_path):
    x = gen_sparse_signal((4, 6), 5, seed=3)
    sio.save_signal(tmp_path / "x.txt", x)
    y = sio.load_signal(tmp_path / "x.txt")
    assert y.shape == x.shape and y.sparsity == 5 and y.seed == 3
    assert y.values.tobytes() == x.values.tobytes()


def test_crystal_round_trip():
    x = gen_crystal_lattice((8, 8), spacing=2)
    buf = io.StringIO()
    sio.save_signal(buf, x)
    buf.seek(0)
    y = sio.load_signal(buf)
    assert y.kind == "rock-salt" and np.array_equal(y.values, x.values)


def test_aperture_and_partition_round_trip(tmp_path):
    d = gen_coded_aperture((10,), "uniform-phase", seed=4)
    sio.save_aperture(tmp_path / "d.txt", d)
    e = sio.load_aperture(tmp_path / "d.txt")
    assert e.kind == d.kind and e.values.tobytes() == d.values.tobytes()
    part = gen_regions((10,), 3)
    sio.save_partition(tmp_path / "s.txt", part)
    q = sio.load_partition(tmp_path / "s.txt")
    assert q.count == 3 and np.array_equal(q.membership, part.membership)


def test_measurements_round_trip(tmp_path):
    ens = make_ensemble((8,), P=2, R=2, seed=1)
    g = add_noise(forward(gen_sparse_signal((8,), 2, seed=1), ens), 30.0, seed=5)
    sio.save_measurements(tmp_path / "g.txt", g)
    h = sio.load_measurements(tmp_path / "g.txt")
    assert (h.R, h.P, h.shape) == (2, 2, g.shape)
    assert h.values.tobytes() == g.values.tobytes()
    assert h.ensemble_id == ens.id and h.distances == ens.distances
    assert h.noise == g.noise
    text = (tmp_path / "g.txt").read_text()
    assert "flattening: i,p,r" in text


def test_measurements_bad_flattening(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("shape: 2\nR: 1\nP: 1\nflattening: r,p,i\ndata:\n1.0\n2.0\n")
    with pytest.raises(ValueError):
        sio.load_measurements(p)


def test_report_files(tmp_path):
    ens = make_ensemble((16,), P=2, seed=0)
    x = gen_sparse_signal((16,), 2, seed=0)
    rep = reconstruct(forward(x, ens), ens, SolverParams(s=2, T=20), ground_truth=x)
    sio.save_report(tmp_path, rep)
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "t,mu,grad_norm,objective,rel_error"
    assert len(lines) == 21
    est = sio.read_vector(tmp_path / "estimate.txt")[2]
    assert est.tobytes() == rep.estimate.tobytes()
    header = sio.read_header(tmp_path / "params.txt")
    assert header["tau"] == "0.3" and header["iterations_run"] == "20"


def test_condition_report_round_trip(tmp_path):
    ens = make_ensemble((8,), P=2, seed=0)
    rep = sample_condition1(gen_sparse_signal((8,), 2, seed=0), ens, 10, seed=1)
    sio.save_condition_report(tmp_path / "c.csv", rep)
    header, ratios = sio.load_condition_ratios(tmp_path / "c.csv")
    assert ratios.tobytes() == rep.ratios.tobytes()
    assert float(header["max_ratio"]) == rep.max_ratio
