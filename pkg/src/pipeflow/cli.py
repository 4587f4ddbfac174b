"""Command-line entry point: ``pipeflow <subcommand> [options]``.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 verification failure.
Logging goes to standard error; data go to standard output or to files under --out.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import asymptotics, evolution, modes, ode_core, spectrum, sweep
from .errors import (IoFailure, KappaZero, ParameterError, PipeflowError, SolverError,
                     SpecInvalid)
from .model import (DEFAULT_GRID, TubeParams, state_to_csv, uniform_grid,
                    validate_params)

log = logging.getLogger("pipeflow")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
DEFAULT_PARAMS = {"gamma": 10.0, "eta": 1.0, "kappa": 1.0, "beta": 0.5}
TOL_BOUNDS = (1e-14, 1e-3)
NEAR_DEGENERATE = 1e-6


class InputError(PipeflowError, ValueError):
    """Bad command-line or configuration input."""


def _g(x) -> str:
    return "%.17g" % x


# ----------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    params: TubeParams
    tolerances: dict = field(default_factory=dict)
    grid: int = DEFAULT_GRID
    out: Path | None = None
    threads: int | None = None

    def tol(self, name, default):
        return self.tolerances.get(name, default)


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def build_config(args) -> RunConfig:
    """Merge defaults, the --config file and flags (flags win)."""
    raw = dict(DEFAULT_PARAMS)
    file_vals = read_config_file(args.config) if args.config else {}
    raw.update(file_vals)
    for key in DEFAULT_PARAMS:
        flag = getattr(args, key, None)
        if flag is not None:
            raw[key] = flag
    try:
        params = validate_params(*(float(raw[k]) for k in ("gamma", "eta", "kappa", "beta")))
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise InputError(f"parameter is not a number: {exc}") from None

    tolerances = {}
    for key, value in file_vals.items():
        if key.startswith("tol_"):
            tolerances[key] = float(value)
    if args.tol_root is not None:
        tolerances["tol_root"] = args.tol_root
    for name, value in tolerances.items():
        if not TOL_BOUNDS[0] <= value <= TOL_BOUNDS[1]:
            raise InputError(f"{name}={value} outside [{TOL_BOUNDS[0]:g}, {TOL_BOUNDS[1]:g}]")

    grid = args.grid if args.grid is not None else int(file_vals.get("grid", DEFAULT_GRID))
    if grid < 13:
        raise InputError(f"grid must have at least 13 nodes, got {grid}")
    out = args.out if args.out is not None else file_vals.get("out")
    threads = args.threads if args.threads is not None else file_vals.get("threads")
    threads = sweep.thread_count(int(threads) if threads else None)
    if params.tension < NEAR_DEGENERATE:
        log.warning("near-degenerate tension gamma - eta^2 = %.3g", params.tension)
    return RunConfig(params, tolerances, grid, Path(out) if out else None, threads)


# ----------------------------------------------------------------------------
# output helpers


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_g(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def _emit(cfg: RunConfig, name, text):
    """Write to --out/name when --out is set, else to standard output."""
    if cfg.out is None:
        sys.stdout.write(text)
        return None
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        path = cfg.out / name
        path.write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {name} to {cfg.out}: {exc}") from exc
    log.info("wrote %s", path)
    return path


def _parse_range(text):
    for sep in ("..", ":"):
        if sep in text:
            a, b = text.split(sep, 1)
            try:
                lo, hi = int(a), int(b)
            except ValueError:
                break
            if lo < 0 or hi < lo:
                break
            return lo, hi
    raise InputError(f"expected a range a..b with 0 <= a <= b, got {text!r}")


def _spectrum(cfg, n_max):
    return spectrum.find_spectrum(cfg.params, n_max, tol_root=cfg.tol("tol_root", spectrum.TOL_ROOT),
                                  workers=cfg.threads)


# ----------------------------------------------------------------------------
# subcommands


def cmd_spectrum(args, cfg):
    spec = _spectrum(cfg, args.n_max)
    rows = [(e.index, e.lam.real, e.lam.imag, e.residual, str(e.certified).lower()) for e in spec]
    _emit(cfg, "spectrum.csv", _csv_text(("index", "re_lambda", "im_lambda", "residual", "certified"), rows))
    log.info("spectral abscissa %.12g", spec.abscissa)
    return EXIT_OK


def cmd_asymptotics(args, cfg):
    lo, hi = _parse_range(args.n_range)
    rows = []
    for n in range(lo, hi + 1):
        r = asymptotics.asymptotic_rho(n, cfg.params)
        ch = asymptotics.chain_rho(n, cfg.params)
        rows.append((n, r.rho.real, r.rho.imag, r.lam.real, r.lam.imag, ch.tau_tilde,
                     ch.rho_tilde.real, ch.rho_tilde.imag))
    header = ("n", "re_rho", "im_rho", "re_lambda", "im_lambda", "tau_tilde", "re_rho_tilde", "im_rho_tilde")
    _emit(cfg, "asymptotics.csv", _csv_text(header, rows))
    return EXIT_OK


def cmd_modes(args, cfg):
    spec = _spectrum(cfg, max(args.n, spectrum.LOW_MODES))
    ev = spec.mode(args.n)
    x = modes.energy_vector(modes.build_mode(ev, cfg.params, uniform_grid(cfg.grid)), cfg.params)
    log.info("mode %d: lambda = %s, ||x||_X = %.12g", args.n, ev.lam, x.norm_X)
    state = evolution.mode_profile(x) if args.real else x.as_state()
    _emit(cfg, f"mode_{args.n}.csv", state_to_csv(state))
    return EXIT_OK


def basis_check_rows(params, n_max, spec=None, grid=None):
    """(n, d_n, d_n_energy, gram_condition) for n = 0..n_max."""
    spec = spec or spectrum.find_spectrum(params, n_max)
    upper = spec.upper()[: n_max + 1]
    built = [modes.build_mode(e, params, grid) for e in upper]
    bench = modes.benchmark_modes(params, n_max, modes.benchmark_variant(params),
                                  flow_phase=True, grid=grid)
    close = modes.quadratic_closeness(built, bench, params)
    family = modes.modal_family(spec, params, n_max + 1, grid)
    basis = modes.biorthogonal_duals(family, params)
    n_real = len(spec.real())
    rows = []
    for n in range(len(built)):
        k = n_real + 2 * (n + 1)
        cond = float(np.linalg.cond(basis.gram[:k, :k]))
        rows.append((n, float(close.d[n]), float(close.d_energy[n]), cond))
    return rows


def cmd_basis_check(args, cfg):
    rows = basis_check_rows(cfg.params, args.n_max, _spectrum(cfg, args.n_max), uniform_grid(cfg.grid))
    _emit(cfg, "basis_check.csv", _csv_text(("n", "d_n", "d_n_energy", "gram_condition"), rows))
    return EXIT_OK


def _profile(name, cfg, family, index):
    if name == "modal":
        return evolution.modal_profile(family, count=len(family))
    if name == "mode":
        upper = [x for x in family if x.lam.imag > 0]
        if not 0 <= index < len(upper):
            raise InputError(f"mode index {index} outside 0..{len(upper) - 1}")
        return evolution.mode_profile(upper[index])
    return evolution.smooth_profile(cfg.params, cfg.grid)


def _trace_rows(trace):
    return [(float(t), float(e), float(bv), float(bvp)) for t, e, bv, bvp in
            zip(trace.times, trace.energies, trace.boundary_v, trace.boundary_vprime)]


TRACE_HEADER = ("t", "E", "boundary_v", "boundary_vprime")


def cmd_evolve(args, cfg):
    if args.t_end <= 0 or args.dt <= 0:
        raise InputError("--t-end and --dt must be positive")
    params, grid = cfg.params, uniform_grid(cfg.grid)
    spec = _spectrum(cfg, args.modes + 2)
    family = modes.modal_family(spec, params, args.modes, grid)
    x0 = _profile(args.profile, cfg, family, args.mode_index)
    times = np.linspace(0.0, args.t_end, args.samples)
    outputs = {}
    if args.method in ("modal", "both"):
        series = evolution.modal_series(x0, modes.biorthogonal_duals(family, params), spec)
        log.info("projection residual %.3g of ||x0||", series.projection_residual)
        outputs["modal"] = (series.energy_trace(times), [series.state(t) for t in times])
    if args.method in ("mol", "both"):
        steps = int(round(args.t_end / args.dt))
        every = max(1, steps // max(1, args.samples - 1))
        traj = evolution.evolve_mol(x0, params, args.t_end, args.dt, save_every=every)
        budget = traj.energy_budget()
        log.info("energy budget residual max %.3g", budget.max())
        outputs["mol"] = (traj.energy_trace(), list(traj.states))
    for method, (trace, states) in outputs.items():
        name = "trace.csv" if len(outputs) == 1 else f"trace_{method}.csv"
        _emit(cfg, name, _csv_text(TRACE_HEADER, _trace_rows(trace)))
        if args.snapshots:
            if cfg.out is None:
                raise InputError("--snapshots needs --out")
            folder = cfg.out / f"snapshots_{method}"
            folder.mkdir(parents=True, exist_ok=True)
            for k, x in enumerate(states):
                (folder / f"state_{k:05d}.csv").write_text(state_to_csv(x))
    return EXIT_OK


def read_trace(path) -> evolution.EnergyTrace:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read trace {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"t", "E"} <= set(reader.fieldnames):
        raise InputError(f"{path} lacks t and E columns")
    recs = list(reader)
    t = np.array([float(r["t"]) for r in recs])
    e = np.array([float(r["E"]) for r in recs])
    return evolution.EnergyTrace(t, e)


def cmd_decay(args, cfg):
    trace = read_trace(args.trace)
    est = evolution.decay_rate(trace, tuple(args.window) if args.window else None)
    doc = {"rate": est.rate, "window": list(est.fit_window), "r_squared": est.r_squared,
           "intercept": est.intercept, "points": est.points}
    _emit(cfg, "decay.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_sweep(args, cfg):
    spec = sweep.load_spec(args.spec)
    result = sweep.run_sweep(spec, threads=cfg.threads)
    out = cfg.out or Path(".")
    for path in sweep.emit_map(result, out):
        log.info("wrote %s", path)
    if result.failures:
        log.warning("%d sweep points failed", len(result.failures))
    return EXIT_OK


def cmd_delta(args, cfg):
    try:
        start, stop = complex(args.start.replace(" ", "")), complex(args.stop.replace(" ", ""))
    except ValueError:
        raise InputError("--start/--stop must be complex numbers such as -1+5j") from None
    if args.count < 2:
        raise InputError("--count must be at least 2")
    rows = ode_core.delta_segment(cfg.params, start, stop, args.count)
    header = ("re_lambda", "im_lambda", "re_delta", "im_delta", "log10_scale")
    _emit(cfg, "delta.csv", _csv_text(header, rows))
    return EXIT_OK


# ----------------------------------------------------------------------------
# verification suite


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    detail: str = ""


def _run_check(name, fn):
    try:
        passed, value, detail = fn()
        return Check(name, bool(passed), value, detail)
    except (PipeflowError, ArithmeticError, ValueError) as exc:
        log.warning("check %s failed with %s", name, exc)
        return Check(name, False, None, f"{type(exc).__name__}: {exc}")


def verify(params: TubeParams, n_max=40, grid=DEFAULT_GRID, tol_root=spectrum.TOL_ROOT, workers=1):
    """Run the invariant suite; returns a list of :class:`Check`."""
    conservative = params.eta == 0.0 and params.kappa == 0.0
    checks = []
    state = {}

    def get_spectrum():
        # a failed solve is remembered so the dependent checks fail without retrying it
        if "spec" not in state:
            try:
                state["spec"] = spectrum.find_spectrum(params, n_max, tol_root=tol_root, workers=workers)
            except PipeflowError as exc:
                state["spec"] = exc
        if isinstance(state["spec"], Exception):
            raise state["spec"]
        return state["spec"]

    def half_plane():
        spec = get_spectrum()
        re = spec.lambdas().real
        if conservative:
            worst = float(np.abs(re).max())
            return worst < 1e-8, worst, "max |Re lambda| (conservative case)"
        worst = float(re.max())
        return worst < -1e-6, worst, "max Re lambda"

    def conjugate_closed():
        lams = get_spectrum().lambdas()
        gap = max(float(np.min(np.abs(lams - z.conjugate()))) / max(1.0, abs(z)) for z in lams)
        return gap < 1e-8, gap, "relative distance to nearest conjugate"

    def origin_excluded():
        dist = float(np.abs(get_spectrum().lambdas()).min())
        return dist > 1e-6, dist, "min |lambda|"

    def certificates():
        spec = get_spectrum()
        total = sum(c.winding for c in spec.certificates)
        return total == len(spec), total, f"{len(spec)} roots found"

    def asymptotic_remainder():
        spec = get_spectrum()
        ns = [n for n in range(10, n_max + 1)]
        scaled = [n * n * abs(spec.mode(n).rho - asymptotics.asymptotic_rho(n, params).rho) for n in ns]
        ratio = max(scaled) / scaled[0]
        return ratio <= 2.0, ratio, "max n^2 |rho - rho_asym| over its value at n=10"

    def vertical_asymptote():
        spec = get_spectrum()
        n = min(30, n_max)
        target = asymptotics.asymptotic_lambda(n, params).real
        gap = abs(spec.mode(n).lam.real - target)
        return gap < 0.1, gap, f"|Re lambda_{n} - asymptote|"

    def closeness():
        spec = get_spectrum()
        rows = basis_check_rows(params, n_max, spec, uniform_grid(grid))
        bench = modes.benchmark_modes(params, n_max, modes.benchmark_variant(params), flow_phase=True)
        tau2 = np.array([abs(b.lam) for b in bench])
        d = np.array([r[1] for r in rows]) * tau2
        de = np.array([r[2] for r in rows]) * tau2
        tail = slice(10, n_max + 1)
        # identical families (kappa = 0) give distances at roundoff level
        floor = 1e-8
        ok = (d[tail].max() <= 2.0 * max(d[10], floor)
              and de[tail].max() <= 2.0 * max(de[10], floor))
        state["gram"] = rows[-1][3]
        return ok, [float(d[tail].max()), float(de[tail].max())], "max d_n tau_n^2 (L2, energy) for n >= 10"

    def gram_bounded():
        if "gram" not in state:
            raise SolverError("closeness check did not run")
        return state["gram"] < 50.0, state["gram"], "Gram condition number"

    def energy_identity():
        spec = get_spectrum()
        family = modes.modal_family(spec, params, 20, uniform_grid(grid))
        decay = 3.0 if conservative else 2.0
        x0 = evolution.modal_profile(family, 20, decay=decay)
        t_end = 1.0 if conservative else 0.25
        traj = evolution.evolve_mol(x0, params, t_end, 1e-4 if conservative else 1e-5)
        e = traj.energy_trace().energies
        if conservative:
            drift = float(np.abs(e / e[0] - 1).max())
            return drift < 1e-4, drift, "max |E/E0 - 1|"
        budget = float(traj.energy_budget().max())
        grow = traj.energy_trace().max_relative_increase()
        return budget < 1e-5 and grow <= evolution.TOL_MONO, [budget, grow], \
            "energy budget residual, max relative increase"

    def growth():
        spec = get_spectrum()
        family = modes.modal_family(spec, params, 20, uniform_grid(grid))
        basis = modes.biorthogonal_duals(family, params)
        x0 = evolution.modal_profile(family, 20)
        series = evolution.modal_series(x0, basis, spec)
        times = np.linspace(0.0, 20.0, 401)
        est = evolution.decay_rate(series.energy_trace(times))
        if conservative:
            return est.rate < 1e-4, est.rate, "fitted decay rate (conservative case)"
        target = abs(spec.abscissa)
        err = abs(est.rate - target) / target
        return err < 0.05, err, f"relative error of fitted rate {est.rate:.6g} vs {target:.6g}"

    suite = [("spectrum_half_plane", half_plane), ("spectrum_conjugate_closed", conjugate_closed),
             ("spectrum_origin_excluded", origin_excluded), ("argument_principle_counts", certificates)]
    if params.kappa > 0:
        suite += [("asymptotic_remainder", asymptotic_remainder), ("vertical_asymptote", vertical_asymptote)]
    suite += [("quadratic_closeness", closeness), ("gram_condition", gram_bounded),
              ("energy_identity", energy_identity), ("spectrum_determined_growth", growth)]
    for name, fn in suite:
        log.info("running check %s", name)
        checks.append(_run_check(name, fn))
    if params.tension < NEAR_DEGENERATE:
        checks.append(Check("tension_margin", True, params.tension, "warning: near-degenerate tension"))
    return checks


def cmd_verify(args, cfg):
    checks = verify(cfg.params, n_max=args.n_max, grid=cfg.grid,
                    tol_root=cfg.tol("tol_root", spectrum.TOL_ROOT), workers=cfg.threads)
    doc = {"params": cfg.params.as_dict(), "passed": all(c.passed for c in checks),
           "checks": [{"name": c.name, "passed": c.passed, "value": c.value, "detail": c.detail}
                      for c in checks]}
    _emit(cfg, "verify.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}", file=sys.stderr)
    return EXIT_OK if doc["passed"] else EXIT_VERIFY


# ----------------------------------------------------------------------------
# argument parsing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value parameter file")
    common.add_argument("--grid", type=int, help="grid node count (default 513)")
    common.add_argument("--tol-root", type=float, help="root-refinement tolerance")
    common.add_argument("--out", help="output directory (default: standard output)")
    common.add_argument("--threads", type=int, help="worker threads (PIPEFLOW_THREADS wins)")
    for key in DEFAULT_PARAMS:
        common.add_argument(f"--{key}", type=float)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="pipeflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="eigenvalues up to a mode label")
    p.add_argument("--n-max", type=int, default=20)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("asymptotics", parents=[common], help="two-term eigenvalue asymptotics")
    p.add_argument("--n-range", default="0..40")
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("modes", parents=[common], help="sampled energy eigenvector of one mode")
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--real", action="store_true", help="emit the real part only")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("basis-check", parents=[common], help="closeness to the benchmark basis")
    p.add_argument("--n-max", type=int, default=40)
    p.set_defaults(func=cmd_basis_check)

    p = sub.add_parser("evolve", parents=[common], help="energy trace of a trajectory")
    p.add_argument("--profile", choices=evolution.PROFILES, default="modal")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-5)
    p.add_argument("--method", choices=("modal", "mol", "both"), default="modal")
    p.add_argument("--modes", type=int, default=20, help="conjugate pairs in the modal basis")
    p.add_argument("--mode-index", type=int, default=0, help="mode used by --profile mode")
    p.add_argument("--samples", type=int, default=201, help="trace points")
    p.add_argument("--snapshots", action="store_true", help="also write state CSVs under --out")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("decay", parents=[common], help="fit a decay rate to a trace")
    p.add_argument("--from", dest="trace", required=True)
    p.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("sweep", parents=[common], help="stability map over a parameter grid")
    p.add_argument("--spec", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    p.add_argument("--n-max", type=int, default=40)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("delta", parents=[common], help="characteristic determinant along a segment")
    p.add_argument("--start", required=True)
    p.add_argument("--stop", required=True)
    p.add_argument("--count", type=int, default=101)
    p.set_defaults(func=cmd_delta)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        cfg = build_config(args)
        return args.func(args, cfg)
    except (ParameterError, SpecInvalid, InputError, KappaZero, IoFailure) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except SolverError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
