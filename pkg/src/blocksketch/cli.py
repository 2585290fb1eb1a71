"""Command-line entry point: ``blocksketch <subcommand> [--config F] [--seed S] [--out DIR]``.

Exit codes: 0 success, 2 validation failure (bad config or a failed
check), 3 when the only problem is that some solver runs diverged.
"""
import argparse
import logging
from pathlib import Path
import sys

from . import experiments as ex
from .errors import BlockSketchError
from .security import result_rows_csv

log = logging.getLogger("blocksketch")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def cmd_gen_data(cfg, out, args):
    ex.gen_data(cfg, out=out)
    _write(out / "config.txt", ex.emit_config(cfg))
    return EXIT_OK


def cmd_fig1(cfg, out, args):
    rows, diverged = ex.run_fig1(cfg)
    _write(out / "fig1.csv", ex.csv_text(["method", "step_factor", "log10_residual"], rows))
    if args.plot:
        from .plotting import plot_fig1

        plot_fig1(rows, out / "fig1.png")
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_fig2(cfg, out, args):
    curves, diverged, histories = ex.run_fig2(cfg, keep_histories=True)
    _write(out / "fig2.csv", ex.csv_text(["t", *cfg.methods], ex.fig2_rows(curves, cfg.methods)))
    from .sim import history_csv

    for method, state in sorted(histories.items()):
        _write(out / f"fig2_history_{method}.csv", history_csv(state))
    if args.plot:
        from .plotting import plot_fig2

        plot_fig2(curves, out / "fig2.png")
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_fig3(cfg, out, args):
    rows = ex.run_fig3(cfg)
    _write(out / "fig3.csv", ex.csv_text(["kind", "block", "score"], rows))
    if args.plot:
        from .plotting import plot_fig3

        plot_fig3(rows, out / "fig3.png")
    return EXIT_OK


def _suite(name, fn):
    def run(cfg, out, args):
        rows = fn(cfg.seed)
        _write(out / f"{name}.csv", result_rows_csv(rows))
        failed = [r for r in rows if not r[4]]
        for r in failed:
            log.error("check failed: %s %s value=%r threshold=%r", *r[:4])
        return EXIT_INVALID if failed else EXIT_OK

    return run


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fig1": cmd_fig1,
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "oracle-suite": _suite("oracle_suite", ex.oracle_suite),
    "secrecy-suite": _suite("secrecy_suite", ex.secrecy_suite),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="blocksketch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="flat key = value config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        p.add_argument("--no-plot", dest="plot", action="store_false", help="skip PNG figures")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ex.load_config(args.config) if args.config else ex.ExperimentConfig()
        if args.seed is not None and args.seed < 0:
            raise ex.ConfigError("seed must be non-negative")
        cfg = ex.with_overrides(cfg, seed=args.seed, out=args.out)
    except (OSError, ValueError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](cfg, Path(cfg.out), args)
    except BlockSketchError as exc:
        log.error("%s failed: %s", args.command, exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
