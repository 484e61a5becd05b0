"""Command-line harness: one subcommand per experiment plus a renderer.

Usage: ``frontier-lab <subcommand> [--config FILE] [--seed N] [--out DIR]
[flags...]``.  Flags override config-file fields, which override built-in
defaults.  Exit codes: 0 all checks pass, 1 a check failed, 2 usage or
data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import FrontierLabError
from .experiments import FIGURES, RUNNERS, make_config
from .reporting import ExperimentReport
from .svg import PLOT_KINDS, render_plot

_EXPERIMENT_FLAGS: dict[str, list[tuple[str, str, type]]] = {
    # (flag, param key, parser) per subcommand; parser also accepts strings
    # from config files.
    "cancellation": [
        ("--n-obs", "n_obs", int),
        ("--alpha", "alpha", float),
        ("--b-x", "b_x", float),
        ("--b-z", "b_z", float),
        ("--rate-threshold", "rate_threshold", float),
        ("--corr-threshold", "corr_threshold", float),
    ],
    "attenuation": [
        ("--n-obs", "n_obs", int),
        ("--alpha", "alpha", float),
        ("--beta", "beta", float),
        ("--gamma", "gamma", float),
        ("--sigma-eta", "sigma_eta", float),
        ("--sigma-eps", "sigma_eps", float),
        ("--sigma-zeta-max", "sigma_zeta_max", float),
        ("--grid-points", "grid_points", int),
        ("--normalization", "normalization", str),
        ("--mc-tolerance", "mc_tolerance", float),
    ],
    "calibration": [
        ("--n-assets", "n_assets", int),
        ("--exponents", "exponents", str),  # comma-separated
        ("--signal-scale", "signal_scale", float),
        ("--n-factors", "n_factors", int),
        ("--idio-scale", "idio_scale", float),
    ],
    "nonlinear-frontier": [
        ("--n-obs", "n_obs", int),
        ("--n-assets", "n_assets", int),
        ("--surrogate", "surrogate", str),
        ("--noise-scale", "noise_scale", float),
        ("--return-scale", "return_scale", float),
        ("--return-noise", "return_noise", float),
        ("--beta-loc", "beta_loc", float),
        ("--beta-scale", "beta_scale", float),
        ("--n-targets", "n_targets", int),
        ("--span", "span", float),
    ],
    "alignment": [
        ("--n-assets", "n_assets", int),
        ("--theta-points", "theta_points", int),
        ("--n-targets", "n_targets", int),
        ("--signal-scale", "signal_scale", float),
        ("--n-factors", "n_factors", int),
        ("--idio-scale", "idio_scale", float),
    ],
    "real-data-frontier": [
        ("--csv", "csv", str),
        ("--date-column", "date_column", str),
        ("--date-format", "date_format", str),
        ("--n-days", "n_days", int),
        ("--n-assets", "n_assets", int),
        ("--n-targets", "n_targets", int),
        ("--span", "span", float),
        ("--signal-source", "signal_source", str),
        ("--vol-window", "vol_window", int),
        ("--demo-days", "demo_days", int),
        ("--demo-tickers", "demo_tickers", int),
        ("--demo-seed", "demo_seed", int),
    ],
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frontier-lab",
        description="Deterministic misspecified-signal portfolio experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        cmd = sub.add_parser(name, help=f"run the {name} experiment")
        cmd.add_argument("--config", type=str, default=None, help="JSON config file")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--reps", type=int, default=None, help="number of repetitions")
        cmd.add_argument("--out", type=str, default="out", help="output root directory")
        cmd.add_argument("--no-figures", action="store_true", help="skip SVG rendering")
        for flag, key, kind in _EXPERIMENT_FLAGS[name]:
            cmd.add_argument(
                flag, dest=f"param_{key}", type=kind, default=None, metavar=key.upper()
            )
        if name == "real-data-frontier":
            cmd.add_argument(
                "--write-demo", action="store_true",
                help="write the deterministic demo fixture to --csv before loading",
            )
    render = sub.add_parser("render", help="re-render a figure from a saved report")
    render.add_argument("--report", type=str, required=True, help="report directory")
    render.add_argument("--kind", type=str, required=True, choices=PLOT_KINDS)
    render.add_argument("--out", type=str, default=None, help="output SVG path")
    return parser


def _parse_exponents(raw) -> tuple[float, ...]:
    if isinstance(raw, (list, tuple)):
        return tuple(float(v) for v in raw)
    return tuple(float(v) for v in str(raw).split(",") if v.strip())


def _collect_overrides(name: str, args: argparse.Namespace) -> dict:
    overrides: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FrontierLabError(f"config file not found: {path}")
        file_cfg = json.loads(path.read_text())
        for key, value in file_cfg.get("params", {}).items():
            overrides[key] = value
        if args.seed is None and "seed" in file_cfg:
            args.seed = int(file_cfg["seed"])
        if args.reps is None and "repetitions" in file_cfg:
            args.reps = int(file_cfg["repetitions"])
    for _, key, _ in _EXPERIMENT_FLAGS[name]:
        value = getattr(args, f"param_{key}", None)
        if value is not None:
            overrides[key] = value
    if name == "real-data-frontier" and getattr(args, "write_demo", False):
        overrides["write_demo"] = True
    if name == "calibration" and "exponents" in overrides:
        overrides["exponents"] = _parse_exponents(overrides["exponents"])
    if name == "nonlinear-frontier" and "alpha_weights" in overrides:
        overrides["alpha_weights"] = tuple(float(v) for v in overrides["alpha_weights"])
    return overrides


def _run_subcommand(name: str, args: argparse.Namespace) -> int:
    overrides = _collect_overrides(name, args)
    config = make_config(
        name,
        seed=42 if args.seed is None else args.seed,
        repetitions=args.reps,
        overrides=overrides,
    )
    report = RUNNERS[name](config)
    figures = {}
    if not args.no_figures:
        figures = {kind: render_plot(report, kind) for kind in FIGURES[name]}
    out_dir = report.write(args.out, figures=figures)
    print(f"{name} config={config.config_hash()} -> {out_dir}")
    for flag, ok in report.pass_flags.items():
        print(f"  [{'PASS' if ok else 'FAIL'}] {flag}")
    return 0 if report.passed else 1


def _run_render(args: argparse.Namespace) -> int:
    report = ExperimentReport.load(args.report)
    svg_text = render_plot(report, args.kind)
    out = Path(args.out) if args.out else Path(args.report) / f"{args.kind}.svg"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg_text)
    print(f"render {args.kind} -> {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "render":
            return _run_render(args)
        return _run_subcommand(args.command, args)
    except FrontierLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
