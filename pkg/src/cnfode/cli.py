"""Command line: ``cnfode run|replay|eval|plot``.

Exit codes: 0 success, 1 configuration error, 2 training divergence, 3 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .archive import ArchiveError, load_weights
from .config import EXPERIMENTS, FIELD_NAMES, FULL_EPOCHS, load_config, parse_overrides, resolve
from .experiments import run_experiment
from .fragmentation import FragmentedSolution
from .plotscript import emit_plot_script
from .training import ConfigError, TrainingDiverged

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("cnfode")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cnfode", description="Collocation neural forms for initial value problems")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a named experiment")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--config", help="key=value config file")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override any config key (repeatable)")
    run.add_argument("--full", action="store_true", help=f"use the full {FULL_EPOCHS} epochs")
    for name in FIELD_NAMES:
        if name != "experiment":
            run.add_argument(f"--{name.replace('_', '-')}", dest=f"opt_{name}", metavar="VALUE")

    replay = sub.add_parser("replay", help="re-run from a manifest")
    replay.add_argument("manifest")
    replay.add_argument("--out", help="output directory (default: <manifest dir>/replay)")

    ev = sub.add_parser("eval", help="evaluate an archived solution")
    ev.add_argument("weights")
    ev.add_argument("--at", nargs="+", type=float, required=True, metavar="T")

    plot = sub.add_parser("plot", help="write the plot script for a run directory")
    plot.add_argument("artifact_dir")
    return p


def _run(args) -> int:
    file_values = load_config(args.config) if args.config else {}
    flags = [f"{name}={getattr(args, 'opt_' + name)}" for name in FIELD_NAMES
             if name != "experiment" and getattr(args, "opt_" + name) is not None]
    overrides = parse_overrides(args.set)
    overrides.update(parse_overrides(flags))
    if args.full and "epochs" not in overrides:
        overrides["epochs"] = FULL_EPOCHS
    cfg = resolve(args.experiment, file_values, overrides)
    return _execute(cfg, None)


def _execute(cfg, out) -> int:
    art = run_experiment(cfg, out)
    print(f"wrote {art.out_dir} ({len(art.tables)} tables, {art.wall_clock_s:.1f} s)")
    if art.failed:
        print("training diverged in at least one cell; see status columns", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _replay(args) -> int:
    manifest = Path(args.manifest)
    cfg = resolve(None, load_config(manifest), {})
    out = Path(args.out) if args.out else manifest.parent / "replay"
    return _execute(cfg, out)


def _eval(args) -> int:
    obj = load_weights(args.weights)
    if not isinstance(obj, FragmentedSolution):
        raise ConfigError("archive holds bare weight matrices without domain data; cannot evaluate")
    cols = ",".join(f"u{c}" for c in range(obj.dim))
    print(f"t,{cols}")
    for t in args.at:
        try:
            vals = obj.evaluate(t)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        print(f"{t!r}," + ",".join(repr(float(v)) for v in vals))
    return EXIT_OK


def _plot(args) -> int:
    print(emit_plot_script(args.artifact_dir))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which would read as divergence
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _run, "replay": _replay, "eval": _eval, "plot": _plot}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ArchiveError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
