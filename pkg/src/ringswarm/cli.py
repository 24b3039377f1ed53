"""Command-line entry point ``ringswarm``.

Subcommands::

    ringswarm run SPEC.toml       one scenario (sweep axes are ignored)
    ringswarm sweep SPEC.toml     Cartesian product of the [sweep] axes
    ringswarm preset NAME         a built-in scenario; --list shows them
    ringswarm check-bounds DIR    re-check a written run against its bound

``--out``, ``--seed``, ``--grid`` and ``--mode`` override the spec file. On
failure a one-line JSON object ``{"error": <category>, "message": ...}``
goes to stderr and the exit code follows :data:`ringswarm.errors.EXIT_CODES`.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import bounds as bnd
from .errors import EXIT_CODES, BoundViolationError, RingSwarmError, SpecError
from .experiment import PRESETS, ExperimentSpec, preset, run_experiment, sweep
from .io import (
    load_spec,
    read_csv,
    read_json,
    resolve_output_dir,
    write_json,
    write_run,
    write_sweep,
)


def _overrides(spec: ExperimentSpec, args) -> ExperimentSpec:
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.grid is not None:
        kw["m"] = args.grid
    if args.mode is not None:
        kw["mode"] = args.mode
    return replace(spec, **kw) if kw else spec


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def _do_run(spec: ExperimentSpec, args) -> int:
    spec = replace(spec, sweep=())
    result = run_experiment(spec)
    out = write_run(result, resolve_output_dir(args.out, spec))
    _emit({"output": str(out), **result.summary()})
    return 0


def _do_sweep(spec: ExperimentSpec, args) -> int:
    if not spec.sweep:
        raise SpecError("sweep needs at least one non-empty [sweep] axis")
    result = sweep(spec, workers=args.workers)
    out = write_sweep(result, spec, resolve_output_dir(args.out, spec))
    _emit({"output": str(out), "members": len(result.rows)})
    return 0


def cmd_run(args) -> int:
    return _do_run(_overrides(load_spec(args.spec), args), args)


def cmd_sweep(args) -> int:
    return _do_sweep(_overrides(load_spec(args.spec), args), args)


def cmd_preset(args) -> int:
    if args.list or not args.name:
        for name in sorted(PRESETS):
            axes = ", ".join(f"{k}[{len(v)}]" for k, v in PRESETS[name].sweep) or "single run"
            print(f"{name}: {axes}")
        return 0
    spec = _overrides(preset(args.name), args)
    return _do_sweep(spec, args) if spec.sweep else _do_run(spec, args)


def check_run_dir(run_dir) -> bnd.BoundReport:
    """Recompute the bound report of a run directory written by ``run``."""
    run_dir = Path(run_dir)
    manifest = read_json(run_dir / "manifest.json")
    stored = read_json(run_dir / "bounds.json")
    spec = manifest.get("spec", {})
    kind = spec.get("bound_kind")
    if kind is None:
        raise SpecError(f"{run_dir}: no theorem inequality applies to this run")
    m = read_csv(run_dir / "metrics.csv")
    constants = bnd.BoundConstants(**stored["constants"])
    return bnd.check(kind, m["t"], m["err_l2"], constants, float(spec["kp"]))


def cmd_check_bounds(args) -> int:
    report = check_run_dir(args.run_dir)
    summary = report.summary()
    write_json(Path(args.run_dir) / "bounds_check.json", summary)
    _emit(summary)
    if report.violations:
        raise BoundViolationError(
            f"{report.violations} sample(s) violate the {report.kind} inequality"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ringswarm", description="Density control of swarms on a ring.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory (default: $RINGSWARM_OUT/<scenario>)")
        sp.add_argument("--seed", type=int, help="root random seed")
        sp.add_argument("--grid", type=int, help="number of grid cells")
        sp.add_argument("--mode", choices=("macro", "micro"), help="plant model")
        sp.add_argument("--workers", type=int, default=1, help="parallel sweep members")

    sp = sub.add_parser("run", help="run one scenario from a spec file")
    sp.add_argument("spec")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run the sweep axes of a spec file")
    sp.add_argument("spec")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("preset", help="run a built-in scenario")
    sp.add_argument("name", nargs="?")
    sp.add_argument("--list", action="store_true", help="list presets and exit")
    common(sp)
    sp.set_defaults(func=cmd_preset)

    sp = sub.add_parser("check-bounds", help="re-check the bound of a written run")
    sp.add_argument("run_dir")
    sp.set_defaults(func=cmd_check_bounds)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except RingSwarmError as exc:
        cat = exc.category
        print(json.dumps({"error": cat, "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES.get(cat, 1)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
