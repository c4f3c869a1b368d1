"""Command-line entry point ``greenhouse-mpc``.

Failures print a single line ``error: <category>: <message>`` to stderr and
exit with the category's code.
"""
from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from .. import __version__
from .config import ConfigError, load_config
from .manifest import RunManifest
from .pipeline import HarnessError, build_report, evaluate_runs, generate_data, simulate, train_grid

EXIT_CODES = {
    "usage": 2,
    "config": 3,
    "input": 4,
    "missing-data": 5,
    "training": 6,
    "simulation": 7,
    "numerics": 8,
    "io": 9,
    "internal": 10,
    "interrupted": 130,
}


def _constant(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("expected three comma-separated numbers") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated numbers")
    return vals


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        fail("usage", message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, default=Path("runs/default"), help="run directory")
    common.add_argument("--smoke", action="store_true", help="tiny end-to-end configuration")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="greenhouse-mpc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("generate-data", parents=[common], help="oracle-MPC training episodes")
    sub.add_parser("train", parents=[common], help="train the surrogate grid")
    sub.add_parser("evaluate", parents=[common], help="closed-loop evaluation and report")
    sim = sub.add_parser("simulate", parents=[common], help="one closed-loop run on the held-out scenario")
    sim.add_argument("--policy", choices=("zero", "constant", "oracle-mpc", "surrogate-mpc"), default="zero")
    sim.add_argument("--cell", choices=("gru", "lstm"), default="gru")
    sim.add_argument("--horizon", type=int, default=24)
    sim.add_argument("--constant", type=_constant, default=None, metavar="U1,U2,U3")
    sub.add_parser("report", parents=[common], help="rebuild report.csv from evaluation logs")
    return p


def fail(category: str, message: str) -> None:
    line = " ".join(str(message).split())
    print(f"error: {category}: {line}", file=sys.stderr)
    raise SystemExit(EXIT_CODES.get(category, EXIT_CODES["internal"]))


def run(args: argparse.Namespace) -> Path:
    cfg = load_config(args.config, smoke=args.smoke, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.open(out, cfg.hash(), cfg.raw)
    started = datetime.now(timezone.utc)
    cmd = args.command
    if cmd == "generate-data":
        generate_data(cfg, out, manifest)
    elif cmd == "train":
        train_grid(cfg, out, manifest)
    elif cmd == "evaluate":
        evaluate_runs(cfg, out, manifest)
    elif cmd == "simulate":
        if args.policy == "constant" and args.constant is None:
            raise HarnessError("usage", "--policy constant needs --constant U1,U2,U3")
        simulate(cfg, out, args.policy, cell=args.cell, horizon=args.horizon, constant=args.constant,
                 manifest=manifest)
    else:
        build_report(cfg, out, manifest)
    manifest.record(cmd, started)
    missing = manifest.missing()
    if missing:
        raise HarnessError("io", f"manifest lists missing artifacts: {', '.join(missing)}")
    return manifest.write()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        path = run(args)
    except ConfigError as exc:
        fail("config", exc)
    except HarnessError as exc:
        fail(exc.category, exc)
    except OSError as exc:
        fail("io", exc)
    except FloatingPointError as exc:
        fail("numerics", exc)
    except KeyboardInterrupt:
        fail("interrupted", "cancelled by user")
    except Exception as exc:  # noqa: BLE001 - last-resort categorization
        fail("internal", f"{type(exc).__name__}: {exc}")
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
