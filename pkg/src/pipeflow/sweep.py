"""Stability maps: spectral abscissa over one- or two-dimensional parameter grids."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .errors import IoFailure, ParameterError, PipeflowError, SpecInvalid, TensionTooLow
from .model import validate_params
from .spectrum import TOL_ROOT, find_spectrum

log = logging.getLogger(__name__)

PARAM_NAMES = ("gamma", "eta", "kappa", "beta")
MAX_POINTS = 10_000
DEFAULT_N_MAX = 8
THREADS_ENV = "PIPEFLOW_THREADS"
CSV_FIELDS = PARAM_NAMES + ("status", "abscissa", "certified", "slowest_mode", "message")


@dataclass(frozen=True)
class Axis:
    """A swept parameter with ``steps`` equally spaced values from ``lo`` to ``hi``."""

    name: str
    lo: float
    hi: float
    steps: int

    def __post_init__(self):
        if self.name not in PARAM_NAMES:
            raise SpecInvalid(f"unknown parameter {self.name!r}")
        if self.steps < 1:
            raise SpecInvalid(f"axis {self.name} needs at least one step")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise SpecInvalid(f"axis {self.name} has non-finite bounds")
        if self.steps == 1 and self.lo != self.hi:
            raise SpecInvalid(f"axis {self.name} has one step but distinct bounds")

    @property
    def values(self):
        return np.linspace(self.lo, self.hi, self.steps)

    @classmethod
    def parse(cls, name, text):
        """Read ``lo:hi:steps``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise SpecInvalid(f"axis {name} must read lo:hi:steps, got {text!r}")
        try:
            return cls(name, float(parts[0]), float(parts[1]), int(parts[2]))
        except ValueError as exc:
            raise SpecInvalid(f"axis {name}: {exc}") from None


@dataclass(frozen=True)
class SweepSpec:
    """Fixed parameter values, one or two axes, and the number of modes per point."""

    fixed: dict
    axes: tuple
    n_max: int = DEFAULT_N_MAX
    tol_root: float = TOL_ROOT
    outputs: tuple = ("abscissa",)

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "fixed", {k: float(v) for k, v in self.fixed.items()})
        if not 1 <= len(self.axes) <= 2:
            raise SpecInvalid(f"need one or two axes, got {len(self.axes)}")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise SpecInvalid("an axis is given twice")
        for key in self.fixed:
            if key not in PARAM_NAMES:
                raise SpecInvalid(f"unknown parameter {key!r}")
            if key in names:
                raise SpecInvalid(f"{key} is both fixed and swept")
        missing = set(PARAM_NAMES) - set(names) - set(self.fixed)
        if missing:
            raise SpecInvalid(f"no value for {', '.join(sorted(missing))}")
        if self.size > MAX_POINTS:
            raise SpecInvalid(f"grid has {self.size} points, limit is {MAX_POINTS}")
        if self.n_max < 0:
            raise SpecInvalid("n_max must be nonnegative")
        # only gamma <= eta^2 is tolerated (as excluded rows); anything else
        # invalid anywhere on the grid rejects the whole spec
        for point in self.points():
            try:
                validate_params(**point)
            except TensionTooLow:
                pass
            except ParameterError as exc:
                raise SpecInvalid(f"grid point {point}: {exc}") from None

    @property
    def size(self):
        return math.prod(a.steps for a in self.axes)

    @property
    def shape(self):
        return tuple(a.steps for a in self.axes)

    def points(self):
        """Parameter dictionaries in row-major order over the axes."""
        for combo in product(*(a.values for a in self.axes)):
            point = dict(self.fixed)
            point.update({a.name: float(v) for a, v in zip(self.axes, combo)})
            yield {k: point[k] for k in PARAM_NAMES}


def parse_spec(text) -> SweepSpec:
    """Read a flat ``key=value`` spec; axes use ``name=lo:hi:steps``.

    Blank lines and ``#`` comments are ignored. Recognised extra keys are
    ``n_max``, ``tol_root`` and ``outputs`` (comma separated).
    """
    fixed, axes, extra = {}, [], {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecInvalid(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in PARAM_NAMES:
            if ":" in value:
                axes.append(Axis.parse(key, value))
            else:
                try:
                    fixed[key] = float(value)
                except ValueError:
                    raise SpecInvalid(f"line {lineno}: {key} is not a number") from None
        elif key in ("n_max", "tol_root", "outputs"):
            extra[key] = value
        else:
            raise SpecInvalid(f"line {lineno}: unknown key {key!r}")
    try:
        kwargs = {}
        if "n_max" in extra:
            kwargs["n_max"] = int(extra["n_max"])
        if "tol_root" in extra:
            kwargs["tol_root"] = float(extra["tol_root"])
        if "outputs" in extra:
            kwargs["outputs"] = tuple(o.strip() for o in extra["outputs"].split(",") if o.strip())
    except ValueError as exc:
        raise SpecInvalid(str(exc)) from None
    return SweepSpec(fixed, tuple(axes), **kwargs)


def load_spec(path) -> SweepSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read sweep spec {path}: {exc}") from exc
    return parse_spec(text)


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    eta: float
    kappa: float
    beta: float
    status: str                      # "ok", "excluded" or "failed"
    abscissa: float | None = None
    certified: bool | None = None
    slowest_mode: int | None = None  # mode label of the rightmost eigenvalue, -1 if real
    message: str = ""

    @property
    def params(self):
        return {k: getattr(self, k) for k in PARAM_NAMES}


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: tuple
    failures: tuple = field(default=())

    def abscissae(self):
        """Abscissa per grid point in axis order (NaN where unavailable)."""
        vals = [r.abscissa if r.status == "ok" else math.nan for r in self.rows]
        return np.array(vals, dtype=float).reshape(self.spec.shape)


def _solve_point(point, n_max, tol_root) -> SweepRow:
    if not point["gamma"] > point["eta"] ** 2:
        return SweepRow(**point, status="excluded", message="gamma <= eta^2")
    try:
        params = validate_params(**point)
        spec = find_spectrum(params, n_max, tol_root=tol_root)
    except PipeflowError as exc:
        log.warning("sweep point %s failed: %s", point, exc)
        return SweepRow(**point, status="failed", message=f"{type(exc).__name__}: {exc}")
    top = max(spec.eigenvalues, key=lambda e: (e.lam.real, -abs(e.lam.imag)))
    certified = all(e.certified for e in spec.eigenvalues)
    mode = -1 if top.mode is None else int(top.mode)
    return SweepRow(**point, status="ok", abscissa=float(top.lam.real),
                    certified=certified, slowest_mode=mode)


def thread_count(requested=None):
    """Worker count: PIPEFLOW_THREADS wins over ``requested``, which wins over the CPU count."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    if requested:
        return max(1, int(requested))
    return os.cpu_count() or 1


def run_sweep(spec: SweepSpec, threads=None) -> SweepResult:
    """Solve every grid point independently; rows come back in grid order."""
    points = list(spec.points())
    workers = min(thread_count(threads), max(1, len(points)))
    log.info("sweep over %d points with %d workers", len(points), workers)

    def task(item):
        i, point = item
        return i, _solve_point(point, spec.n_max, spec.tol_root)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(task, enumerate(points)))
    else:
        done = [task(item) for item in enumerate(points)]
    done.sort(key=lambda pair: pair[0])
    rows = tuple(row for _, row in done)
    failures = tuple((i, row.message) for i, row in enumerate(rows) if row.status == "failed")
    return SweepResult(spec, rows, failures)


# ----------------------------------------------------------------------------
# serialisation


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, k)) for k in CSV_FIELDS])
    return buf.getvalue()


def parse_csv(text):
    """Inverse of :func:`rows_to_csv`."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return ()
    if tuple(reader.fieldnames) != CSV_FIELDS:
        raise ValueError(f"unexpected columns {reader.fieldnames}")
    rows = []
    for rec in reader:
        rows.append(SweepRow(
            *(float(rec[k]) for k in PARAM_NAMES),
            status=rec["status"],
            abscissa=float(rec["abscissa"]) if rec["abscissa"] else None,
            certified={"true": True, "false": False}.get(rec["certified"]),
            slowest_mode=int(rec["slowest_mode"]) if rec["slowest_mode"] else None,
            message=rec["message"],
        ))
    return tuple(rows)


def _spec_dict(spec: SweepSpec):
    return {"fixed": spec.fixed, "axes": [asdict(a) for a in spec.axes],
            "n_max": spec.n_max, "tol_root": spec.tol_root, "outputs": list(spec.outputs)}


def result_to_json(result: SweepResult) -> str:
    doc = {"spec": _spec_dict(result.spec),
           "rows": [asdict(r) for r in result.rows],
           "failures": [list(f) for f in result.failures]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def result_from_json(text) -> SweepResult:
    doc = json.loads(text)
    sd = doc["spec"]
    spec = SweepSpec(sd["fixed"], tuple(Axis(**a) for a in sd["axes"]), sd["n_max"],
                     sd["tol_root"], tuple(sd["outputs"]))
    rows = tuple(SweepRow(**r) for r in doc["rows"])
    return SweepResult(spec, rows, tuple(tuple(f) for f in doc["failures"]))


def matrix_text(result: SweepResult) -> str:
    """Gnuplot ``matrix nonuniform`` block: first row holds the second axis values."""
    if len(result.spec.axes) != 2:
        raise ValueError("matrix output needs a two-dimensional sweep")
    ax0, ax1 = result.spec.axes
    grid = result.abscissae()
    lines = [" ".join([_fmt(float(ax1.steps))] + [_fmt(float(v)) for v in ax1.values])]
    for x, row in zip(ax0.values, grid):
        lines.append(" ".join([_fmt(float(x))] + ["nan" if math.isnan(v) else _fmt(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def emit_map(result: SweepResult, out_dir, formats=("csv", "json")):
    """Write sweep.csv / sweep.json (and sweep_matrix.txt for 2-D sweeps); returns the paths."""
    out = Path(out_dir)
    writers = {"csv": ("sweep.csv", lambda: rows_to_csv(result.rows)),
               "json": ("sweep.json", lambda: result_to_json(result))}
    paths = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for fmt in formats:
            if fmt not in writers:
                raise ValueError(f"unknown format {fmt!r}")
            name, make = writers[fmt]
            path = out / name
            path.write_text(make())
            paths.append(path)
        if len(result.spec.axes) == 2:
            path = out / "sweep_matrix.txt"
            path.write_text(matrix_text(result))
            paths.append(path)
    except OSError as exc:
        raise IoFailure(f"cannot write sweep output to {out}: {exc}") from exc
    return paths
