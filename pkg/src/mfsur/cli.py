"""Command-line interface.

Subcommands:
  reference   build the Monte-Carlo reference probability map
  pilot       build the noise table and freeze hyper-parameters
  run         run one strategy under a cost budget
  compare     run several strategies and aggregate RMSE curves
  audit       dump per-candidate criterion tables for a few selections

Common flags: --config PATH, --strategy sl:<dt>|msur, --budget FLOAT,
--reps INT, --seed INT, --grid NxM, --out DIR.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from mfsur import _backend, persist
from mfsur.harness import (ExperimentConfig, compare_strategies, config_from_dict,
                           ensure_model_state, load_config, run_audit, run_experiment)
from mfsur.oscillator import reference_probability_map


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must look like 50x50, got {text!r}") from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config file; flags override it")
    p.add_argument("--strategy", help="msur or sl:<dt>")
    p.add_argument("--budget", type=float, help="sequential simulation-cost budget")
    p.add_argument("--reps", type=int, help="number of repetitions")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--grid", type=_parse_grid, help="quadrature grid, e.g. 50x50")
    p.add_argument("--out", help="output directory")
    p.add_argument("--reference", help="reference map CSV path")
    p.add_argument("--candidates", type=int, help="candidate points per level")
    p.add_argument("--quiet", action="store_true")


def _build_config(args, require=("seed", "out")) -> ExperimentConfig:
    overrides = {}
    for flag, key in (("strategy", "strategy"), ("budget", "budget"),
                      ("reps", "repetitions"), ("seed", "master_seed"),
                      ("grid", "quadrature_shape"), ("out", "out_dir"),
                      ("reference", "reference_path"),
                      ("candidates", "candidates_per_level")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if args.config:
        return load_config(args.config, overrides)
    missing = [f"--{k}" for k in require
               if overrides.get({"seed": "master_seed", "out": "out_dir"}.get(k, k)) is None]
    if missing:
        raise SystemExit(f"missing required flags (or use --config): {' '.join(missing)}")
    return config_from_dict(overrides)


def _cmd_reference(args) -> None:
    cfg = _build_config(args)
    shape = cfg.quadrature_shape
    ref = reference_probability_map(
        cfg.bounds, shape, dt=cfg.t_hf, replications=cfg.reference_replications,
        z_crit=cfg.z_crit, master_seed=cfg.master_seed)
    out = Path(cfg.out_dir)
    path = out / f"reference_{shape[0]}x{shape[1]}_dt{cfg.t_hf:g}.csv"
    persist.write_reference_map(path, ref)
    print(f"reference map written to {path}")
    print(f"global exceedance probability: {ref.global_estimate:.4f} "
          f"({ref.replications} replications per node)")


def _cmd_pilot(args) -> None:
    cfg = _build_config(args)
    kernel, noise = ensure_model_state(cfg)
    print(f"model state written to {cfg.resolved_model_state_path()}")
    print(f"frozen kernel: variance={kernel.variance:.4g}, "
          f"input lengthscales={kernel.input_lengthscales}, "
          f"fidelity lengthscale={kernel.fidelity_lengthscale:.4g}")


def _cmd_run(args) -> None:
    cfg = _build_config(args)
    rows = run_experiment(cfg)
    print(f"metrics written to {Path(cfg.out_dir) / 'metrics.csv'} ({len(rows)} rows)")


def _cmd_compare(args) -> None:
    cfg = _build_config(args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if not strategies:
        raise SystemExit("--strategies must list at least one strategy")
    configs = [replace(cfg, strategy=s) for s in strategies]
    summary = compare_strategies(configs)
    print(f"curves written to {Path(cfg.out_dir) / 'curves.csv'}")
    for strategy, rmse_p, rmse_field, best in summary:
        mark = "  <- best single-level" if best else ""
        print(f"{strategy:>10}: final RMSE(P) {rmse_p:.5f}, "
              f"final RMSE(p field) {rmse_field:.5f}{mark}")


def _cmd_audit(args) -> None:
    cfg = _build_config(args)
    path = run_audit(cfg, iterations=args.iters)
    print(f"criterion tables written to {path}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfsur",
        description="Bayesian sequential design for multi-fidelity stochastic "
                    "simulators: threshold-exceedance estimation on a budget "
                    f"(kernel backend: {_backend.BACKEND_NAME})")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, extra in (
        ("reference", _cmd_reference, None),
        ("pilot", _cmd_pilot, None),
        ("run", _cmd_run, None),
        ("compare", _cmd_compare, "strategies"),
        ("audit", _cmd_audit, "iters"),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        if extra == "strategies":
            p.add_argument("--strategies", required=True,
                           help="comma-separated, e.g. msur,sl:1,sl:0.05")
        if extra == "iters":
            p.add_argument("--iters", type=int, default=1,
                           help="number of selection rounds to dump")
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(name)s: %(message)s", datefmt="%H:%M:%S")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
