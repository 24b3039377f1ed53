"""Spec files in, CSV and JSON out.

Spec files are TOML. Top-level keys hold run settings; four optional
tables group the rest::

    scenario = "limited-sensing"
    n_agents = 100
    grid = 256            # cells on the ring
    t_f = 6.0
    seed = 0
    mode = "micro"        # or "macro"
    reference = "stationary"
    snapshot_times = [0.0, 6.0]

    [plant]
    G = 0.5
    L = 0.5

    [controller]
    kp = 10.0
    ki = 0.0
    delta = "0.4pi"       # radians, or a multiple of pi as a string
    kernel = "exact"      # "f1", "f2", or give G and L explicitly

    [target]
    mu = 0.0
    k = 4.0

    [initial]
    mu = 0.0
    k = 0.0
    placement = "even"    # or "sampled"

    [disturbance]
    amplitude = 0.5
    switch_time = 3.0

    [sweep]
    delta = ["0.1pi", "0.4pi", "pi"]
    kp = [10, 100]

Unknown keys are rejected. Floats are written with ``repr`` so every value
survives a write/parse round trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import OutputError, SpecError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

#: Environment variable naming the default output directory.
OUTPUT_ENV = "RINGSWARM_OUT"

_TOP = {
    "scenario": "scenario",
    "n_agents": "n_agents",
    "grid": "m",
    "t_f": "t_f",
    "seed": "seed",
    "mode": "mode",
    "reference": "reference",
    "bandwidth": "bandwidth",
    "dt_max": "dt_max",
    "snapshot_times": "snapshot_times",
    "output_dir": "output_dir",
}
_TABLES = {
    "plant": {"G": "G", "L": "L"},
    "controller": {
        "kp": "kp",
        "ki": "ki",
        "delta": "delta",
        "kernel": "kernel",
        "G": "controller_G",
        "L": "controller_L",
    },
    "target": {"mu": "mu", "k": "k"},
    "initial": {"mu": "initial_mu", "k": "initial_k", "placement": "placement"},
    "disturbance": {"amplitude": "d_hat", "switch_time": "switch_time"},
}
_ANGLES = {"delta", "mu", "initial_mu"}
_PI_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\s*\*?\s*pi\s*$")


def parse_angle(value) -> float:
    """Accept a number of radians or a string like ``"0.4pi"`` / ``"pi"``."""
    if isinstance(value, bool):
        raise SpecError(f"expected an angle, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _PI_RE.match(value)
        if m:
            return (float(m.group(1)) if m.group(1) else 1.0) * math.pi
    raise SpecError(f"cannot read {value!r} as an angle (use radians or e.g. '0.4pi')")


def _convert(name: str, value):
    if name in _ANGLES:
        return parse_angle(value)
    if name == "snapshot_times":
        if not isinstance(value, list):
            raise SpecError("snapshot_times must be a list of times")
        return tuple(float(v) for v in value)
    return value


def spec_from_mapping(data: Mapping[str, Any]):
    """Build an :class:`~ringswarm.experiment.ExperimentSpec` from nested keys."""
    from .experiment import SWEEP_AXES, ExperimentSpec

    kwargs: Dict[str, Any] = {}
    for key, value in data.items():
        if key in _TOP:
            kwargs[_TOP[key]] = _convert(_TOP[key], value)
        elif key in _TABLES:
            if not isinstance(value, Mapping):
                raise SpecError(f"[{key}] must be a table")
            for sub, v in value.items():
                if sub not in _TABLES[key]:
                    raise SpecError(f"unknown key {key}.{sub}")
                name = _TABLES[key][sub]
                kwargs[name] = _convert(name, v)
        elif key == "sweep":
            if not isinstance(value, Mapping):
                raise SpecError("[sweep] must be a table")
            axes = []
            for axis, vals in value.items():
                if axis not in SWEEP_AXES:
                    raise SpecError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
                if not isinstance(vals, list):
                    raise SpecError(f"sweep.{axis} must be a list")
                axes.append((axis, tuple(_convert(axis, v) for v in vals)))
            kwargs["sweep"] = tuple(axes)
        else:
            raise SpecError(f"unknown key {key!r}")
    try:
        return ExperimentSpec(**kwargs)
    except TypeError as exc:
        raise SpecError(str(exc)) from None


def load_spec(path: Union[str, Path]):
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise SpecError(f"spec file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"{path}: {exc}") from None
    return spec_from_mapping(data)


def resolve_output_dir(explicit: Optional[str], spec=None) -> Path:
    """``explicit`` wins, then ``spec.output_dir``, then ``$RINGSWARM_OUT``,
    then ``./ringswarm-out``; the scenario name is appended to the last two."""
    if explicit:
        return Path(explicit)
    if spec is not None and spec.output_dir:
        return Path(spec.output_dir)
    base = Path(os.environ.get(OUTPUT_ENV) or "ringswarm-out")
    return base / spec.scenario if spec is not None else base


# ----------------------------------------------------------------------
# writing


def fmt(value) -> str:
    """Text form of one CSV cell; floats round-trip exactly."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if math.isnan(v) else repr(v)
    return str(value)


def _open(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_json(path: Union[str, Path], data) -> Path:
    path = Path(path)
    with _open(path) as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def snapshot_name(t: float) -> str:
    return f"snapshot_{float(t):g}.csv"


def write_metrics(path, series) -> Path:
    cols = series.COLUMNS
    data = [getattr(series, c) for c in cols]
    return write_csv(path, cols, zip(*data))


def write_run(result, out_dir: Union[str, Path]) -> Path:
    """Write ``metrics.csv``, snapshots, ``bounds.json`` and ``manifest.json``."""
    out = Path(out_dir)
    write_metrics(out / "metrics.csv", result.series)
    for snap in result.snapshots:
        write_csv(
            out / snapshot_name(snap.t),
            ("x", "rho", "rho_d", "u_field"),
            zip(snap.x, snap.rho, snap.rho_d, snap.u_field),
        )
    bounds = {"constants": result.constants.to_dict(), "kp": float(result.spec.kp)}
    if result.report is not None:
        bounds.update(result.report.summary())
    else:
        bounds.update({"kind": "none", "note": "no single-perturbation estimate applies"})
    write_json(out / "bounds.json", bounds)
    write_json(out / "manifest.json", {"spec": result.spec.resolved(), "summary": result.summary()})
    return out


def write_sweep(result, spec, out_dir: Union[str, Path], per_run: bool = True) -> Path:
    """Write ``sweep.csv`` (one row per member) and, optionally, each member's run."""
    out = Path(out_dir)
    rows = result.rows
    columns = list(result.axes) + ["seed"]
    extra: List[str] = []
    for row in rows:
        for k in row:
            if k not in columns and k not in extra:
                extra.append(k)
    columns += extra
    write_csv(out / "sweep.csv", columns, ([row.get(c) for c in columns] for row in rows))
    if per_run:
        for i, run in enumerate(result.runs):
            write_run(run, out / "runs" / f"{i:03d}")
    write_json(
        out / "manifest.json",
        {"spec": spec.resolved(), "members": len(rows), "seed_rule": "SeedSequence(seed, spawn_key=indices)"},
    )
    return out


def emit_results(result, out_dir: Union[str, Path], spec=None) -> Path:
    """Write a :class:`RunResult` or a :class:`SweepResult` to ``out_dir``."""
    from .experiment import RunResult

    if isinstance(result, RunResult):
        return write_run(result, out_dir)
    if spec is None:
        raise SpecError("writing a sweep needs the ExperimentSpec that produced it")
    return write_sweep(result, spec, out_dir)


# ----------------------------------------------------------------------
# reading


def read_csv(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Columns of a numeric CSV as float arrays (empty cells become NaN)."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not rows:
        raise SpecError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[j]) if r[j] != "" else np.nan for r in body])
        except ValueError:
            cols[name] = np.array([r[j] for r in body], dtype=object)
    return cols


def read_json(path: Union[str, Path]):
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: {exc}") from None
