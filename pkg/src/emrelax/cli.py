"""Command-line front end.

Subcommands: symbol-scan, lyapunov-search, pointwise-verify, simulate,
relax-study.  Exit codes: 0 success, 1 acceptance-threshold violation,
2 usage/config error, 3 numerical abort (vacuum or CFL).

The EMRELAX_THREADS environment variable is advisory: when set it seeds
OMP_NUM_THREADS before the numerics load, otherwise the BLAS/FFT defaults
stand.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

if os.environ.get("EMRELAX_THREADS"):
    os.environ.setdefault("OMP_NUM_THREADS", os.environ["EMRELAX_THREADS"])

__all__ = ["main"]

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _version() -> str:
    from . import __version__

    return __version__


def _load_config(path: str | None):
    from .config import parse_config

    text = Path(path).read_text() if path else ""
    return parse_config(text)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _finish(out_dir, command, cfg, seed, files):
    from .config import config_hash, emit_config
    from .manifest import write_manifest

    out_dir = Path(out_dir)
    resolved = out_dir / "resolved-config.yaml"
    resolved.write_text(emit_config(cfg))
    files = list(files) + [resolved]
    write_manifest(out_dir, command, _version(), config_hash(cfg), seed, files)


def _xi_grid(args):
    import numpy as np

    return np.geomspace(args.xi_min, args.xi_max, args.xi_count)


def cmd_symbol_scan(args) -> int:
    import numpy as np

    from .symbol import constrained_abscissa, envelope_shape

    cfg = _load_config(args.config)
    out_dir = Path(args.out_dir or cfg.data["output"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    epsilons = args.epsilon or [cfg.data["model"]["epsilon"]]
    rng = np.random.default_rng(args.seed)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    rows = []
    for eps in epsilons:
        params = cfg.model_params(epsilon=eps)
        for r in _xi_grid(args):
            absc = constrained_abscissa(params, r * direction)
            shape = float(envelope_shape(eps, r))
            rows.append((float(eps), float(r), absc, -shape, -absc / shape))
    out = out_dir / (args.out or "symbol-scan.csv")
    _write_csv(out, ["epsilon", "xi_norm", "abscissa", "lambda_envelope", "ratio"], rows)
    _finish(out_dir, "symbol-scan", cfg, args.seed, [out])
    return EXIT_OK


def cmd_lyapunov_search(args) -> int:
    from .lyapunov import search_eta_c0

    cfg = _load_config(args.config)
    out_dir = Path(args.out_dir or cfg.data["output"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    epsilons = args.epsilon or [cfg.data["model"]["epsilon"]]
    params = cfg.model_params()
    result = search_eta_c0(
        params, _xi_grid(args), epsilons=epsilons, rel_tol=args.tol
    )
    out = out_dir / (args.out or "lyapunov-search.json")
    _write_json(out, result)
    _finish(out_dir, "lyapunov-search", cfg, None, [out])
    return EXIT_OK if not result.get("failed") else EXIT_THRESHOLD


def cmd_pointwise_verify(args) -> int:
    from .symbol import verify_pointwise

    cfg = _load_config(args.config)
    out_dir = Path(args.out_dir or cfg.data["output"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    epsilons = args.epsilon or [1.0, 0.1, 0.01]
    params = cfg.model_params(epsilon=epsilons[0])
    report = verify_pointwise(
        params,
        _xi_grid(args),
        args.t,
        trials=args.trials,
        seed=args.seed,
        n_directions=args.directions,
        c_cap=args.cap,
        epsilons=epsilons,
    )
    out = out_dir / (args.out or "pointwise-verify.json")
    _write_json(out, report)
    _finish(out_dir, "pointwise-verify", cfg, args.seed, [out])
    return EXIT_OK if report["passed"] else EXIT_THRESHOLD


def cmd_simulate(args) -> int:
    from .bands import BandPartition
    from .manifest import write_snapshot
    from .solver import CFLError, VacuumError, make_initial, run

    cfg = _load_config(args.config)
    out_dir = Path(args.out_dir or cfg.data["output"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = cfg.grid()
    params = cfg.model_params()
    stepper = cfg.stepper()
    ispec = cfg.initial_spec()
    out_cfg = cfg.data["output"]
    part = BandPartition(grid, params.epsilon)
    try:
        state, _ = make_initial(grid, params, ispec)
        record = run(
            state,
            stepper,
            diagnostics_every=out_cfg["diagnostics_every"],
            snapshots_every=out_cfg["snapshots_every"],
            band_partition=part,
        )
    except (VacuumError, CFLError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    files = []
    diag = out_dir / "diagnostics.csv"
    _write_csv(
        diag,
        ["time", "energy_defect", "gauss_residual", "divb_residual"],
        list(zip(record.times, record.energy_defect, record.gauss, record.divb)),
    )
    files.append(diag)
    band_csv = out_dir / "band-norms.csv"
    _write_csv(
        band_csv,
        ["time", "term_name", "regime", "s", "value"],
        [(r["time"], r["term_name"], r["regime"], r["s"], r["value"]) for r in record.band_rows],
    )
    files.append(band_csv)
    for idx, snap in enumerate(record.snapshots):
        path = out_dir / f"snapshot-{idx:06d}.emx"
        write_snapshot(
            path,
            snap.time,
            {"rho": snap.rho, "u": snap.u, "E": snap.e_field, "B": snap.b_field},
        )
        files.append(path)
    summary = out_dir / "summary.json"
    _write_json(summary, record.summary())
    files.append(summary)
    _finish(out_dir, "simulate", cfg, ispec.seed, files)
    return EXIT_OK


def cmd_relax_study(args) -> int:
    from .relax import convergence_study

    cfg = _load_config(args.config)
    out_dir = Path(args.out_dir or cfg.data["output"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = cfg.grid()
    params = cfg.model_params()
    ispec = cfg.initial_spec()
    study = cfg.data["study"]
    eps_list = args.eps or study["eps"]
    report = convergence_study(
        grid,
        params,
        ispec,
        eps_list,
        t_end=study["horizon"],
        dt_base=study["dt_base"],
        sample_every=study["sample_every"],
    )
    files = []
    out_json = out_dir / (args.out or "relax-study.json")
    _write_json(out_json, {"rows": report.rows, "slopes": report.slopes, "meta": report.meta})
    files.append(out_json)
    norm_rows = []
    for row in report.rows:
        if "failed" in row:
            continue
        for key, value in row["norms"].items():
            norm_rows.append((row["epsilon"], key, value))
    out_csv = out_dir / "relax-norms.csv"
    _write_csv(out_csv, ["epsilon", "norm", "value"], norm_rows)
    files.append(out_csv)
    _finish(out_dir, "relax-study", cfg, ispec.seed, files)
    n_good = sum(1 for row in report.rows if "failed" not in row)
    if n_good < 3:
        print("numerical abort: too few runs completed for a slope fit", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _add_grid_flags(p, xi_min=1e-2, xi_max=1e3, count=60):
    p.add_argument("--xi-min", type=float, default=xi_min)
    p.add_argument("--xi-max", type=float, default=xi_max)
    p.add_argument("--xi-count", type=int, default=count)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emrelax", description=__doc__)
    parser.add_argument("--version", action="version", version=f"emrelax {_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("symbol-scan", help="decay rates of the mode generator over a |xi| grid")
    p.add_argument("--config", default=None)
    p.add_argument("--epsilon", type=float, action="append")
    _add_grid_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV filename inside the output dir")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_symbol_scan)

    p = sub.add_parser("lyapunov-search", help="certify (eta, c0) over a frequency grid")
    p.add_argument("--config", default=None)
    p.add_argument("--epsilon", type=float, action="append")
    _add_grid_flags(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_lyapunov_search)

    p = sub.add_parser("pointwise-verify", help="fit (c0, C) for the pointwise decay bound")
    p.add_argument("--config", default=None)
    p.add_argument("--epsilon", type=float, action="append")
    _add_grid_flags(p)
    p.add_argument("--t", type=float, nargs="+", default=[0.1, 1.0, 10.0])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--directions", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=float, default=100.0)
    p.add_argument("--out", default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_pointwise_verify)

    p = sub.add_parser("simulate", help="run the nonlinear system from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("relax-study", help="epsilon sweep of the drift-diffusion error norms")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", type=float, action="append")
    p.add_argument("--out", default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_relax_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 for --help
        return int(exc.code or 0)
    from .config import ConfigError

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
