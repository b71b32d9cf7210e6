"""Command-line entry point ``mbofdm``.

Exit codes: 0 success, 2 configuration error, 3 partial results (some
realizations did not reach the target or failed).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .campaigns import ResultError, load_result, run_experiment, write_result
from .config import PRESETS, ConfigError, load_config, load_preset
from .emit import FIGURE_IDS, FigureDataError, emit_figure_data, range_table

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3

log = logging.getLogger("mbofdm")

SUBCOMMANDS = {
    "ber-outage": ("ber_outage", "table1"),
    "capacity-outage": ("capacity_outage", "capacity_outage"),
    "loading-study": ("loading_study", "loading_study"),
    "channel-stats": ("channel_stats", "channel_stats"),
}
RESULT_ROLE = {
    "ber_outage": "ber",
    "capacity_outage": "capacity",
    "loading_study": "loading",
    "channel_stats": "channel_stats",
}


def _campaign_parser(sub, name: str, default_study: str):
    p = sub.add_parser(name, help=f"run a {name} campaign")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="YAML experiment config")
    src.add_argument("--preset", choices=PRESETS, help="shipped config set (default: desk)")
    p.add_argument("--study", default=default_study, help=f"preset study name (default: {default_study})")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--out", type=Path, help="output directory (default: the config's output)")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--realizations", type=int, help="override n_realizations")
    p.add_argument("--figures", nargs="*", default=[], choices=FIGURE_IDS, metavar="FIG",
                   help="figure data to emit from this run's results")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbofdm", description="Multiband OFDM UWB link and capacity studies")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, study) in SUBCOMMANDS.items():
        _campaign_parser(sub, name, study)

    p = sub.add_parser("figure", help="emit figure or table data from saved results")
    p.add_argument("figure_ids", nargs="+", choices=FIGURE_IDS, metavar="FIG")
    p.add_argument("--results", nargs="*", default=[], metavar="ROLE=SIDECAR",
                   help="result sidecars, e.g. capacity=out/capacity_outage.json")
    p.add_argument("--out", type=Path, default=Path("figures"))
    p.add_argument("--etas", type=float, nargs="*", help="fig6 estimation noise factors")

    p = sub.add_parser("range-table", help="range increase for power gains")
    p.add_argument("gains_db", type=float, nargs="+")
    p.add_argument("-d", "--path-loss-exponent", type=float, default=2.0)

    p = sub.add_parser("build-tables", help="recompute the per-tone capacity tables")
    p.add_argument("path", type=Path)
    return parser


def _load_cfg(args, kind: str):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.realizations is not None:
        overrides["n_realizations"] = args.realizations
    if args.config is not None:
        cfg = load_config(args.config, overrides)
    else:
        cfg = load_preset(args.preset or "desk", args.study, overrides)
    if cfg.kind != kind:
        raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand ({kind})")
    return cfg


def _run_campaign(args, kind: str) -> int:
    cfg = _load_cfg(args, kind)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    out = args.out or Path(cfg.output)
    log.info("running %s (%s) with %d worker(s)", cfg.name, cfg.kind, args.workers)
    result = run_experiment(cfg, workers=args.workers)
    for path in write_result(result, out):
        print(path)
    role = RESULT_ROLE[cfg.kind]
    for fig in args.figures:
        try:
            for path in emit_figure_data({role: result}, fig, out):
                print(path)
        except FigureDataError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARTIAL
    if not result.complete:
        print("warning: some realizations did not complete", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _figure(args) -> int:
    results = {}
    for item in args.results:
        role, sep, path = item.partition("=")
        if not sep:
            raise ConfigError(f"--results entries must be ROLE=PATH, got {item!r}")
        results[role] = load_result(path)
    params = {"etas": args.etas} if args.etas else {}
    for fig in args.figure_ids:
        for path in emit_figure_data(results, fig, args.out, **params):
            print(path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command in SUBCOMMANDS:
            return _run_campaign(args, SUBCOMMANDS[args.command][0])
        if args.command == "figure":
            return _figure(args)
        if args.command == "range-table":
            if not args.path_loss_exponent > 0:
                raise ConfigError("path loss exponent must be > 0")
            pct = range_table(args.gains_db, args.path_loss_exponent)
            print("gain_db,range_increase_pct")
            for g, v in zip(args.gains_db, pct):
                print(f"{g},{v:.2f}")
            return EXIT_OK
        if args.command == "build-tables":
            from ..infotheory import write_tables

            write_tables(args.path)
            print(args.path)
            return EXIT_OK
    except (ConfigError, ResultError, FigureDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
