"""Experiment orchestration: phase diagrams, single reconstructions, checks."""
import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io as sio
from .forward import add_noise, adjoint_field, derive_seed, explicit_matrix, forward, make_ensemble
from .forward import field as measure_field
from .guarantees import (
    TangentElement,
    apply_B_operator,
    check_gram_identity,
    gram_matrix,
    nuclear_norm_rank2,
    sample_condition1,
)
from .metrics import SUCCESS_THRESHOLD, TrialOutcome, relative_error, success_rate
from .model import GridShape, gen_crystal_lattice, gen_sparse_signal
from .solver import SolverParams, reconstruct

logger = logging.getLogger(__name__)

PHASE_COLUMNS = ["s", "m_over_n", "P", "R", "trials", "successes", "success_rate",
                 "mean_rel_error", "mean_runtime_s"]
TRIAL_COLUMNS = ["cell", "trial", "s", "P", "R", "seed", "rel_error", "success", "runtime_s"]
SOLVER_KEYS = ("tau", "gamma", "gamma1", "mu0", "T", "alpha_y", "normalization", "early_stop")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    shape: tuple = (128,)
    sparsities: list = field(default_factory=lambda: [2, 4, 8, 16])
    P_values: list = field(default_factory=lambda: [1, 2, 3, 4])
    R_values: list = field(default_factory=lambda: [1])
    aperture_kind: str = "uniform-phase"
    aperture_mode: str = "per-distance"
    trials: int = 20
    success_threshold: float = SUCCESS_THRESHOLD
    solver: dict = field(default_factory=dict)
    snr_db: float = None
    seed: int = 0
    out: str = "results"
    distances: list = None
    wavelength: float = 1.0
    phantom: str = "random"
    lattice_spacing: int = 1
    amplitudes: list = field(default_factory=lambda: [1.0, 0.5])
    delta: float = 0.5
    verify_trials: int = 100
    record_runtime: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            shape = GridShape.coerce(tuple(self.shape) if not isinstance(self.shape, int) else self.shape)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad shape {self.shape!r}: {exc}") from exc
        self.shape = shape.dims
        for name in ("sparsities", "P_values", "R_values"):
            vals = getattr(self, name)
            if not vals or any(int(v) != v or v < 1 for v in vals):
                raise ConfigError(f"{name} must be a nonempty list of positive integers")
            setattr(self, name, [int(v) for v in vals])
        if any(s > shape.n for s in self.sparsities):
            raise ConfigError(f"every sparsity must be <= n = {shape.n}")
        if any(R > shape.n for R in self.R_values):
            raise ConfigError(f"every R must be <= n = {shape.n}")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        unknown = set(self.solver) - set(SOLVER_KEYS)
        if unknown:
            raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
        if self.phantom not in ("random", "rock-salt"):
            raise ConfigError(f"unknown phantom {self.phantom!r}")
        try:
            SolverParams(s=1, **self.solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solver parameters: {exc}") from exc

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        d = asdict(self)
        d["shape"] = list(self.shape)
        return d

    def identity(self):
        """Settings that determine results; the output location is excluded."""
        d = self.to_dict()
        d.pop("out")
        return d

    def config_hash(self):
        blob = json.dumps(self.identity(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def solver_params(self, s):
        return SolverParams(s=s, **self.solver)

    def ensemble(self, P, R, seed):
        return make_ensemble(
            self.shape, P=P, R=R, aperture_kind=self.aperture_kind,
            aperture_mode=self.aperture_mode, seed=seed,
            distances=self.distances[:P] if self.distances else None,
            wavelength=self.wavelength,
        )


def trial_seed(master, cell, trial):
    """Injective packing of (master, cell, trial) into one integer seed."""
    if not (0 <= cell < 2**32 and 0 <= trial < 2**32):
        raise ValueError("cell and trial indices must fit in 32 bits")
    return (int(master) << 64) | (cell << 32) | trial


@dataclass
class PhaseDiagram:
    sparsities: list
    ratios: list
    cells: np.ndarray
    rows: list
    outcomes: list
    metadata: dict


def _run_trial(job):
    config, cell, trial, s, P, R = job
    seed = trial_seed(config.seed, cell, trial)
    start = time.perf_counter()
    x = gen_sparse_signal(config.shape, s, derive_seed(seed, 0))
    ens = config.ensemble(P, R, derive_seed(seed, 1))
    g = forward(x, ens)
    if config.snr_db is not None:
        g = add_noise(g, config.snr_db, derive_seed(seed, 2))
    report = reconstruct(g, ens, config.solver_params(s), ground_truth=x)
    return cell, trial, seed, report.final_error, time.perf_counter() - start


def _map(func, jobs, threads):
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    return [func(job) for job in jobs]


def phase_cells(config):
    return [(s, P, R) for s in config.sparsities for R in config.R_values for P in config.P_values]


def run_phase_diagram(config, threads=1, write=True):
    """Success rate over a grid of sparsity and oversampling ratio ``m/n = P R``."""
    cells = phase_cells(config)
    jobs = [(config, c, t, s, P, R) for c, (s, P, R) in enumerate(cells) for t in range(config.trials)]
    start = time.perf_counter()
    results = sorted(_map(_run_trial, jobs, threads), key=lambda r: (r[0], r[1]))
    elapsed = time.perf_counter() - start

    by_cell = {c: [] for c in range(len(cells))}
    trial_rows = []
    for cell, trial, seed, err, runtime in results:
        s, P, R = cells[cell]
        outcome = TrialOutcome.from_error(err, seed, f"s={s},P={P},R={R}", config.success_threshold)
        by_cell[cell].append((outcome, runtime))
        trial_rows.append([cell, trial, s, P, R, seed, sio._fmt(err), int(outcome.success),
                           sio._fmt(runtime) if config.record_runtime else "nan"])

    rows = []
    for cell, (s, P, R) in enumerate(cells):
        outs = [o for o, _ in by_cell[cell]]
        rate = success_rate(outs)
        rows.append({
            "s": s, "m_over_n": P * R, "P": P, "R": R, "trials": len(outs),
            "successes": sum(o.success for o in outs), "success_rate": rate,
            "mean_rel_error": float(np.mean([o.rel_error for o in outs])),
            "mean_runtime_s": float(np.mean([t for _, t in by_cell[cell]])) if config.record_runtime else float("nan"),
        })

    ratios = sorted({P * R for _, P, R in cells})
    mat = np.zeros((len(config.sparsities), len(ratios)))
    counts = np.zeros_like(mat)
    for row in rows:
        i, j = config.sparsities.index(row["s"]), ratios.index(row["m_over_n"])
        mat[i, j] += row["success_rate"]
        counts[i, j] += 1
    mat = mat / np.maximum(counts, 1)
    _warn_non_monotone(config.sparsities, ratios, mat)

    meta = {
        "config": config.identity(),
        "config_hash": config.config_hash(),
        "master_seed": config.seed,
        "seed_rule": "(master << 64) | (cell << 32) | trial",
        "cells": [list(c) for c in cells],
    }
    if config.record_runtime:
        meta["runtime_s"] = elapsed
    diagram = PhaseDiagram(config.sparsities, ratios, mat, rows,
                           [o for c in by_cell.values() for o, _ in c], meta)
    if write:
        write_phase_diagram(config.out, diagram, trial_rows)
    return diagram


def _warn_non_monotone(sparsities, ratios, mat):
    for i, s in enumerate(sparsities):
        if np.any(np.diff(mat[i]) < 0):
            logger.warning("success rate for s=%d is not monotone in m/n: %s", s, mat[i].tolist())


def write_phase_diagram(out_dir, diagram, trial_rows):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "phase_diagram.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PHASE_COLUMNS)
        for row in diagram.rows:
            writer.writerow([row[c] if isinstance(row[c], int) else sio._fmt(row[c]) for c in PHASE_COLUMNS])
    with open(out / "trials.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIAL_COLUMNS)
        writer.writerows(trial_rows)
    with open(out / "phase_diagram_matrix.txt", "w", encoding="utf-8") as fh:
        fh.write("# success rate; rows: s, columns: m/n\n")
        fh.write("# s: " + " ".join(str(s) for s in diagram.sparsities) + "\n")
        fh.write("# m_over_n: " + " ".join(str(r) for r in diagram.ratios) + "\n")
        for s, row in zip(diagram.sparsities, diagram.cells):
            fh.write(" ".join([str(s)] + [sio._fmt(v) for v in row]) + "\n")
    with open(out / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(diagram.metadata, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# -- single reconstruction ----------------------------------------------------


def make_phantom(config, seed):
    if config.phantom == "rock-salt":
        return gen_crystal_lattice(config.shape, "rock-salt", tuple(config.amplitudes), config.lattice_spacing)
    return gen_sparse_signal(config.shape, config.sparsities[0], seed)


def simulate(config, signal=None):
    """Signal, ensemble and (optionally noisy) measurements for one cell."""
    master = config.seed
    x = signal if signal is not None else make_phantom(config, derive_seed(master, 0))
    ens = config.ensemble(config.P_values[0], config.R_values[0], derive_seed(master, 1))
    g = forward(x, ens)
    if config.snr_db is not None:
        g = add_noise(g, config.snr_db, derive_seed(master, 2))
    return x, ens, g


def run_recon_experiment(config, write=True, signal=None):
    """Simulate one phantom, reconstruct it and write the report files."""
    x, ens, g = simulate(config, signal)
    s = config.sparsities[0]
    if x.sparsity > s:
        logger.warning("phantom has %d Fourier coefficients but s=%d", x.sparsity, s)
    report = reconstruct(g, ens, config.solver_params(s), ground_truth=x)
    report.meta["snr_db"] = config.snr_db
    report.meta["m_over_n"] = ens.P * ens.R
    if write:
        out = Path(config.out)
        sio.save_report(out, report)
        sio.save_signal(out / "truth.txt", x)
        sio.save_measurements(out / "measurements.txt", g)
    return report


# -- verification suite -------------------------------------------------------


def _rel(a, b):
    scale = max(np.linalg.norm(b), np.finfo(float).tiny)
    return float(np.linalg.norm(a - b) / scale)


def _check(name, value, bound, passed=None, note=""):
    if passed is None:
        passed = value <= bound
    return {"check": name, "value": value, "bound": bound,
            "status": "pass" if passed else "fail", "note": note}


def run_verify(config, write=True):
    """Dense-oracle and guarantee checks; returns ``(ConditionReport, checks)``."""
    P, R = config.P_values[0], config.R_values[0]
    master = config.seed
    rng = np.random.default_rng(derive_seed(master, 3))
    x = gen_sparse_signal(config.shape, min(config.sparsities[0], GridShape.coerce(config.shape).n),
                          derive_seed(master, 0))
    ens = config.ensemble(P, R, derive_seed(master, 1))
    single = make_ensemble(config.shape, P=P, R=R, aperture_kind=config.aperture_kind,
                           aperture_mode="single", seed=derive_seed(master, 1),
                           distances=config.distances[:P] if config.distances else None,
                           wavelength=config.wavelength)
    n, m = ens.n, ens.m
    checks = []
    try:
        B = explicit_matrix(ens)
    except ValueError as exc:
        B = None
        checks.append({"check": "dense_oracle", "value": float("nan"), "bound": float("nan"),
                       "status": "skipped", "note": str(exc)})
    v = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    xv = x.values
    if B is not None:
        checks.append(_check("field_vs_dense", _rel(measure_field(xv, ens), B @ xv), 1e-10))
        checks.append(_check("adjoint_vs_dense", _rel(adjoint_field(v, ens), B.conj().T @ v), 1e-10))
        for label, e in (("gram_identity_single", single), ("gram_identity_per_distance", ens)):
            checks.append(_check(label, check_gram_identity(e, "fourier"), 1e-10))
        checks.append(_check("gram_identity_spatial_frame", check_gram_identity(single, "spatial"),
                             float("nan"), passed=True,
                             note="informational: exact only for constant-modulus apertures"))
        lam_max = float(np.linalg.eigvalsh(gram_matrix(ens)).max())
    else:
        lam_max = float(ens.gram_diagonal().max())
    lhs = np.vdot(measure_field(xv, ens), v)
    rhs = np.vdot(xv, adjoint_field(v, ens))
    checks.append(_check("adjoint_identity", float(abs(lhs - rhs) / max(abs(lhs), 1e-300)), 1e-10))

    report = sample_condition1(x, ens, config.verify_trials, derive_seed(master, 4), delta=config.delta)
    checks.append(_check("spectral_quantity", report.spectral_quantity, lam_max / m,
                         passed=abs(report.spectral_quantity - lam_max / m) <= 1e-8 * lam_max / m,
                         note="power iteration vs exact (1/m) lambda_max"))
    worst = 0.0
    for t in range(config.verify_trials):
        wr = np.random.default_rng(derive_seed(master, 5, t)).standard_normal((2, n))
        w = (wr[0] + 1j * wr[1]) / np.sqrt(2)
        W = TangentElement(xv, w)
        slack = np.sum(np.abs(apply_B_operator(W, ens))) - nuclear_norm_rank2(W) * lam_max
        worst = max(worst, slack / (nuclear_norm_rank2(W) * lam_max))
    checks.append(_check("rip_upper_chain", worst, 1e-10, note="max relative excess of ||B(W)||_1 over ||W||_1 lambda_max"))
    checks.append(_check("condition1_upper", report.max_ratio, 1 + report.delta_target))
    checks.append(_check("condition1_min_ratio", report.min_ratio, float("nan"), passed=True,
                         note="reported only; no lower bound enforced"))

    if write:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        sio.save_condition_report(out / "condition_report.csv", report)
        with open(out / "verify_summary.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["check", "value", "bound", "status", "note"])
            for c in checks:
                writer.writerow([c["check"], sio._fmt(c["value"]), sio._fmt(c["bound"]), c["status"], c["note"]])
    return report, checks
