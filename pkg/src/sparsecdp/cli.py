"""Command-line entry point.

Exit codes: 0 on success, 1 on configuration errors, 2 when a ``verify``
check fails.
"""
import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .experiments import (
    ConfigError,
    ExperimentConfig,
    run_phase_diagram,
    run_recon_experiment,
    run_verify,
    simulate,
)
from .forward import derive_seed
from .model import gen_crystal_lattice
from .solver import reconstruct

COMMAND_DEFAULTS = {
    "verify": {"shape": (16,), "P_values": [2], "R_values": [2], "sparsities": [4]},
    "simulate": {"P_values": [2], "sparsities": [8]},
    "reconstruct": {"P_values": [2], "sparsities": [8]},
}


def _shape(text):
    return tuple(int(d) for d in text.lower().split("x"))


def _common(p):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--shape", type=_shape, help="grid shape, e.g. 128 or 16x16")
    p.add_argument("--trials", type=int, help="trials per phase-diagram cell")
    p.add_argument("--snr-db", type=float, help="measurement SNR in dB")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="sparsecdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="emit a measurement set")
    _common(p)
    p.add_argument("--signal", help="signal file to measure instead of a generated phantom")

    p = sub.add_parser("reconstruct", help="simulate (or load) data and reconstruct")
    _common(p)
    p.add_argument("--measurements", help="measurement file written by `simulate`")
    p.add_argument("--truth", help="ground-truth signal file for error traces")

    p = sub.add_parser("phase-diagram", help="success rate over sparsity and m/n")
    _common(p)

    p = sub.add_parser("verify", help="dense-oracle and guarantee checks")
    _common(p)

    p = sub.add_parser("gen-crystal", help="write a rock-salt phantom")
    _common(p)
    p.add_argument("--spacing", type=int, default=1)
    p.add_argument("--amplitudes", type=float, nargs=2, default=(1.0, 0.5))
    return parser


def load_config(args):
    data = dict(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        base = ExperimentConfig.from_file(args.config).to_dict()
        data = base
    overrides = {"seed": args.seed, "out": args.out, "shape": args.shape,
                 "trials": args.trials, "snr_db": args.snr_db}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def _cmd_simulate(args, config):
    signal = sio.load_signal(args.signal) if args.signal else None
    x, ens, g = simulate(config, signal)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    sio.save_signal(out / "signal.txt", x)
    sio.save_measurements(out / "measurements.txt", g)
    print(f"wrote {g.m} measurements (n={ens.n}, P={ens.P}, R={ens.R}) to {out}")
    return 0


def _cmd_reconstruct(args, config):
    if not args.measurements:
        report = run_recon_experiment(config)
    else:
        g = sio.load_measurements(args.measurements)
        if g.shape.dims != tuple(config.shape):
            raise ConfigError(f"measurement shape {g.shape} does not match config shape")
        config = dataclasses.replace(config, P_values=[g.P], R_values=[g.R])
        ens = config.ensemble(g.P, g.R, derive_seed(config.seed, 1))
        if g.ensemble_id and g.ensemble_id != ens.id:
            raise ConfigError("measurement file was produced by a different ensemble (seed/config mismatch)")
        truth = sio.load_signal(args.truth) if args.truth else None
        report = reconstruct(g, ens, config.solver_params(config.sparsities[0]), ground_truth=truth)
        sio.save_report(config.out, report)
    msg = f"ran {report.iterations_run} iterations"
    if report.final_error is not None:
        msg += f", final relative error {report.final_error:.3e}"
    print(msg + f"; report in {config.out}")
    return 0


def _cmd_phase_diagram(args, config):
    diagram = run_phase_diagram(config, threads=args.threads)
    header = "s \\ m/n " + " ".join(f"{r:>6}" for r in diagram.ratios)
    print(header)
    for s, row in zip(diagram.sparsities, diagram.cells):
        print(f"{s:>8} " + " ".join(f"{v:6.2f}" for v in row))
    return 0


def _cmd_verify(args, config):
    report, checks = run_verify(config)
    failed = False
    for c in checks:
        print(f"{c['status'].upper():7s} {c['check']:30s} value={c['value']:.3e} bound={c['bound']:.3e} {c['note']}")
        failed |= c["status"] == "fail"
    print(f"min_ratio={report.min_ratio:.6e} max_ratio={report.max_ratio:.6e} "
          f"(isotropic scaling: {report.scaled_min_ratio:.4f} .. {report.scaled_max_ratio:.4f})")
    return 2 if failed else 0


def _cmd_gen_crystal(args, config):
    x = gen_crystal_lattice(config.shape, "rock-salt", tuple(args.amplitudes), args.spacing)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    sio.save_signal(out / "crystal.txt", x)
    print(f"rock-salt phantom on {x.shape} grid with {x.sparsity} Fourier coefficients -> {out / 'crystal.txt'}")
    return 0


COMMANDS = {
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "phase-diagram": _cmd_phase_diagram,
    "verify": _cmd_verify,
    "gen-crystal": _cmd_gen_crystal,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
        return COMMANDS[args.command](args, config)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
