"""Plain-text serialisation of signals, measurements, reports and checks.

Vector files have a ``key: value`` header followed by a ``data:`` line and
one ``index, re, im`` row per grid point. Floats are written with
``repr`` so every file round-trips bit-exactly.
"""
import csv
import io
import math
from pathlib import Path

import numpy as np

from .forward import MeasurementSet
from .model import CodedAperture, CrystalSignal, GridShape, RegionPartition


def _fmt(x):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _fmt_value(v):
    if v is None:
        return "none"
    if isinstance(v, GridShape):
        return str(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt_value(u) for u in v)
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v)


def _open(target, mode):
    if hasattr(target, "write") or hasattr(target, "read"):
        return target, False
    return open(target, mode, encoding="utf-8", newline=""), True


def _write_header(fh, header):
    for key, value in header.items():
        fh.write(f"{key}: {_fmt_value(value)}\n")


def _read_sections(fh):
    header = {}
    for line in fh:
        line = line.rstrip("\n")
        if not line.strip():
            continue
        if line.strip() == "data:":
            break
        key, _, value = line.partition(":")
        header[key.strip()] = value.strip()
    rows = [line.strip() for line in fh if line.strip()]
    return header, rows


def parse_shape(text):
    return GridShape(tuple(int(d) for d in str(text).split("x")))


def _parse_opt_int(text):
    return None if text in ("none", "") else int(text)


# -- vectors -----------------------------------------------------------------


def write_vector(target, kind, shape, values, seed=None, **extra):
    fh, own = _open(target, "w")
    try:
        header = {"shape": GridShape.coerce(shape), "kind": kind, "seed": seed}
        header.update(extra)
        _write_header(fh, header)
        fh.write("data:\n")
        for k, v in enumerate(np.asarray(values, dtype=complex)):
            fh.write(f"{k}, {_fmt(v.real)}, {_fmt(v.imag)}\n")
    finally:
        if own:
            fh.close()


def read_vector(source):
    fh, own = _open(source, "r")
    try:
        header, rows = _read_sections(fh)
    finally:
        if own:
            fh.close()
    shape = parse_shape(header["shape"])
    values = np.zeros(shape.n, dtype=complex)
    for row in rows:
        idx, re, im = (s.strip() for s in row.split(","))
        values[int(idx)] = complex(float(re), float(im))
    return header, shape, values


def save_signal(target, signal):
    write_vector(target, signal.kind, signal.shape, signal.values, signal.seed, sparsity=signal.sparsity)


def load_signal(source):
    header, shape, values = read_vector(source)
    return CrystalSignal(
        shape, values, int(header["sparsity"]), seed=_parse_opt_int(header.get("seed", "none")),
        kind=header.get("kind", "signal"),
    )


def save_aperture(target, aperture):
    write_vector(target, aperture.kind, aperture.shape, aperture.values, aperture.seed)


def load_aperture(source):
    header, shape, values = read_vector(source)
    return CodedAperture(shape, values, kind=header["kind"], seed=_parse_opt_int(header.get("seed", "none")))


def save_partition(target, partition):
    write_vector(target, "partition", partition.shape, partition.membership, None, count=partition.count)


def load_partition(source):
    header, shape, values = read_vector(source)
    return RegionPartition(shape, int(header["count"]), values.real.astype(np.int64))


# -- measurements -------------------------------------------------------------


def save_measurements(target, g):
    fh, own = _open(target, "w")
    noise = g.noise or {}
    try:
        _write_header(fh, {
            "shape": g.shape,
            "R": g.R,
            "P": g.P,
            "distances": list(g.distances) if g.distances is not None else None,
            "snr_db": noise.get("snr_db"),
            "sigma": noise.get("sigma"),
            "seed": noise.get("seed"),
            "flattening": "i,p,r",
            "ensemble_id": g.ensemble_id,
        })
        fh.write("data:\n")
        for v in g.values:
            fh.write(_fmt(v) + "\n")
    finally:
        if own:
            fh.close()


def load_measurements(source):
    fh, own = _open(source, "r")
    try:
        header, rows = _read_sections(fh)
    finally:
        if own:
            fh.close()
    if header.get("flattening", "i,p,r") != "i,p,r":
        raise ValueError(f"unsupported flattening {header['flattening']!r}")
    dist = header.get("distances", "none")
    distances = None if dist == "none" else tuple(float(z) for z in dist.split(","))
    noise = None
    if header.get("snr_db", "none") != "none":
        noise = {
            "snr_db": float(header["snr_db"]),
            "sigma": float(header["sigma"]),
            "seed": _parse_opt_int(header["seed"]),
        }
    ens_id = header.get("ensemble_id", "none")
    return MeasurementSet(
        parse_shape(header["shape"]), int(header["R"]), int(header["P"]),
        np.array([float(r) for r in rows]),
        ensemble_id=None if ens_id == "none" else ens_id,
        distances=distances, noise=noise,
    )


# -- reconstruction reports ---------------------------------------------------


def trace_rows(report):
    for t in range(report.iterations_run):
        row = [t, _fmt(report.mu_trace[t]), _fmt(report.grad_norm_trace[t]), _fmt(report.objective_trace[t])]
        if report.error_trace is not None:
            row.append(_fmt(report.error_trace[t]))
        yield row


def save_report(out_dir, report, prefix=""):
    """Write ``params.txt``, ``trace.csv`` and ``estimate.txt`` into `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = dict(report.params.to_dict()) if report.params is not None else {}
    params.update(
        iterations_run=report.iterations_run,
        scale=report.scale,
        init_correlation=report.init_correlation,
        final_rel_error=report.final_error,
    )
    params.update(report.meta)
    with open(out / f"{prefix}params.txt", "w", encoding="utf-8") as fh:
        _write_header(fh, params)
    with open(out / f"{prefix}trace.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        cols = ["t", "mu", "grad_norm", "objective"]
        if report.error_trace is not None:
            cols.append("rel_error")
        writer.writerow(cols)
        writer.writerows(trace_rows(report))
    shape = report.meta.get("shape", GridShape(len(report.estimate)))
    write_vector(out / f"{prefix}estimate.txt", "estimate", shape, report.estimate, None,
                 sparsity=report.params.s if report.params else None)
    return out


def read_header(source):
    fh, own = _open(source, "r")
    try:
        header, _ = _read_sections(fh)
    finally:
        if own:
            fh.close()
    return header


# -- condition reports --------------------------------------------------------


def save_condition_report(target, report):
    fh, own = _open(target, "w")
    try:
        _write_header(fh, {
            "delta_target": report.delta_target,
            "min_ratio": report.min_ratio,
            "max_ratio": report.max_ratio,
            "spectral_quantity": report.spectral_quantity,
            "gram_residual": report.gram_residual,
            "mode": report.mode,
            "scaled_min_ratio": report.scaled_min_ratio,
            "scaled_max_ratio": report.scaled_max_ratio,
        })
        fh.write("data:\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trial", "ratio"])
        for t, r in enumerate(report.ratios):
            writer.writerow([t, _fmt(r)])
    finally:
        if own:
            fh.close()


def load_condition_ratios(source):
    fh, own = _open(source, "r")
    try:
        header, rows = _read_sections(fh)
    finally:
        if own:
            fh.close()
    reader = csv.reader(io.StringIO("\n".join(rows)))
    next(reader)
    return header, np.array([float(r[1]) for r in reader])
