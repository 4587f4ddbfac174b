"""Time-domain solutions of the closed-loop tube: modal series and method of lines.

The modal series expands the initial state in the truncated eigenvector family
and advances each coefficient by ``exp(lambda t)``. The method-of-lines solver
is an independent check: fourth-order differences on the uniform grid with the
boundary conditions built into ghost nodes, advanced by the trapezoidal rule.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.stats import linregress

from . import _fd
from .errors import (IndexMismatch, NonFinite, NonPositiveEnergy,
                     ProjectionResidualTooLarge, StepUnstable)
from .model import (DEFAULT_GRID, StateVector, TubeParams, energy, energy_norm,
                    power_balance, uniform_grid)
from .modes import BiorthogonalSet, EnergyEigenvector

log = logging.getLogger(__name__)

TOL_MONO = 1e-6
TOL_REAL = 1e-8
PROJECTION_LIMIT = 0.05
TRANSIENT_FRACTION = 0.25
MIN_FIT_POINTS = 20
GHOST_REACH = 4        # right-end boundary stencils use nodes N-4 .. N+2
LEFT_POINTS = 5        # one-sided stencils for v'(0), v'''(0)
LEFT_SIXTH = False
SLOPE_POINTS = 5       # one-sided stencil for v'(1)


# ----------------------------------------------------------------------------
# energy traces and decay fits


@dataclass(frozen=True, eq=False)
class EnergyTrace:
    """Energy samples along a trajectory, with the boundary velocity data."""

    times: np.ndarray
    energies: np.ndarray
    boundary_v: np.ndarray = None
    boundary_vprime: np.ndarray = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        e = np.asarray(self.energies, dtype=float)
        if t.shape != e.shape or t.ndim != 1:
            raise ValueError("times and energies must be 1-D arrays of equal length")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "energies", e)
        for name in ("boundary_v", "boundary_vprime"):
            val = getattr(self, name)
            object.__setattr__(self, name, np.full_like(t, np.nan) if val is None
                               else np.asarray(val, dtype=float))

    def __len__(self):
        return len(self.times)

    def max_relative_increase(self):
        """Largest ``E[i+1] / E[i] - 1`` over consecutive samples."""
        e = self.energies
        if len(e) < 2:
            return 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(e[:-1] > 0, e[1:] / e[:-1] - 1.0, 0.0)
        return float(ratio.max())

    def is_monotone(self, tol=TOL_MONO):
        return self.max_relative_increase() <= tol

    def relative_drift(self):
        """``max |E - E(0)| / E(0)`` over the trace."""
        return float(np.abs(self.energies - self.energies[0]).max() / self.energies[0])


@dataclass(frozen=True)
class DecayEstimate:
    """Fit of ``E(t) ~ C exp(-2 rate t)`` on a window of the trace."""

    rate: float
    fit_window: tuple
    r_squared: float
    intercept: float
    slope: float
    points: int


def decay_rate(trace: EnergyTrace, window=None) -> DecayEstimate:
    """Least-squares line through ``log E`` on the window (default: second half)."""
    t, e = trace.times, trace.energies
    if window is None:
        window = (t[0] + 0.5 * (t[-1] - t[0]), t[-1])
    lo, hi = float(window[0]), float(window[1])
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < MIN_FIT_POINTS:
        raise ValueError(f"decay fit needs {MIN_FIT_POINTS} points in the window, got {int(sel.sum())}")
    if np.any(e[sel] <= 0):
        raise NonPositiveEnergy("energy must be positive throughout the fit window")
    y = np.log(e[sel])
    fit = linregress(t[sel], y)
    r2 = float(fit.rvalue**2)
    if not np.isfinite(r2) or np.ptp(y) <= 1e-13 * max(1.0, abs(y.mean())):
        # a flat trace has undefined correlation but fits exactly
        r2 = 1.0
    return DecayEstimate(max(0.0, -0.5 * fit.slope), (lo, hi), r2, float(fit.intercept),
                         float(fit.slope), int(sel.sum()))


# ----------------------------------------------------------------------------
# modal series


@dataclass(frozen=True, eq=False)
class ModalSeries:
    """Truncated expansion ``x(t) = sum_n exp(lambda_n t) c_n x_n`` on the grid of x0."""

    basis: BiorthogonalSet
    coefficients: np.ndarray
    x0: StateVector
    projection_residual: float
    tops: np.ndarray = field(repr=False)
    bottoms: np.ndarray = field(repr=False)

    @property
    def eigenvalues(self):
        return self.basis.eigenvalues

    def coefficients_at(self, t):
        return self.coefficients * np.exp(self.eigenvalues * t)

    def complex_state(self, t) -> StateVector:
        a = self.coefficients_at(t)
        s = self.x0.s
        return StateVector(pin_left(a @ self.tops, s), pin_left(a @ self.bottoms, s), s)

    def imag_fraction(self, t):
        """Energy norm of the imaginary part relative to that of x0."""
        x = self.complex_state(t)
        imag = StateVector(np.imag(x.w), np.imag(x.v), x.s)
        return energy_norm(imag, self.basis.params) / energy_norm(self.x0, self.basis.params)

    def state(self, t) -> StateVector:
        """Series state at time t; real initial data give the real part."""
        if t < 0:
            raise ValueError("t must be non-negative")
        x = self.complex_state(t)
        if self.x0.is_real:
            return StateVector(np.real(x.w), np.real(x.v), x.s)
        return x

    def energy_trace(self, times) -> EnergyTrace:
        times = np.asarray(times, dtype=float)
        params = self.basis.params
        states = [self.state(t) for t in times]
        e = np.array([energy(x, params) for x in states])
        bv = np.array([float(np.real(x.v[-1])) for x in states])
        return EnergyTrace(times, e, bv, np.array([_boundary_slope(x) for x in states]))


def _boundary_slope(x: StateVector):
    idx, wts = _fd.boundary_weights(x.n, 1, x.h, end=1)
    return float(np.real(np.dot(wts, np.asarray(x.v)[idx])))


def modal_series(x0: StateVector, basis: BiorthogonalSet, spectrum=None,
                 limit=PROJECTION_LIMIT) -> ModalSeries:
    """Expansion coefficients of x0 and the relative size of the unresolved remainder."""
    if spectrum is not None:
        known = np.asarray(spectrum.lambdas())
        for lam in basis.eigenvalues:
            if np.min(np.abs(known - lam)) > 1e-6 * max(1.0, abs(lam)):
                raise IndexMismatch(f"basis eigenvalue {lam} is not in the spectrum")
    s = x0.s
    bottoms = np.array([x.mode.derivative(0, s) for x in basis.modes])
    tops = bottoms / basis.eigenvalues[:, None]
    coeffs = basis.coefficients(x0)
    w = pin_left(coeffs @ tops, s)
    rest = StateVector(np.asarray(x0.w) - w, np.asarray(x0.v) - pin_left(coeffs @ bottoms, s), s)
    params = basis.params
    norm0 = energy_norm(x0, params)
    resid = energy_norm(rest, params) / norm0 if norm0 > 0 else 0.0
    if resid > limit:
        raise ProjectionResidualTooLarge(
            f"projection residual {resid:.3g} of ||x0|| exceeds {limit:.3g}; add modes")
    return ModalSeries(basis, coeffs, x0, float(resid), tops, bottoms)


def evolve_modal(x0: StateVector, basis: BiorthogonalSet, spectrum, t) -> StateVector:
    """Truncated modal series evaluated at time t."""
    return modal_series(x0, basis, spectrum).state(t)


# ----------------------------------------------------------------------------
# method of lines


def _weights(x0, nodes, k):
    return _fd.fornberg_weights(float(x0), np.asarray(nodes, dtype=float), k)[:, k]


@dataclass(frozen=True, eq=False)
class MolOperator:
    """Semi-discrete generator on the unknowns (w_1..w_N, v_1..v_N).

    ``L`` maps the state to its time derivative; ``ghosts`` maps it to the
    extended displacement vector w_{-3}..w_{N+2}.
    """

    params: TubeParams
    s: np.ndarray
    L: sp.csr_matrix
    extend: sp.csr_matrix

    @property
    def size(self):
        return self.L.shape[0]

    def pack(self, state: StateVector):
        return np.concatenate([np.asarray(state.w)[1:], np.asarray(state.v)[1:]])

    def unpack(self, y) -> StateVector:
        N = len(self.s) - 1
        zero = np.zeros(1, dtype=y.dtype)
        return StateVector(np.concatenate([zero, y[:N]]), np.concatenate([zero, y[N:]]), self.s)

    def rate(self, state: StateVector) -> StateVector:
        return self.unpack(self.L @ self.pack(state))


def mol_operator(params: TubeParams, n=DEFAULT_GRID) -> MolOperator:
    """Assemble the ghost-node discretisation of the equations of motion."""
    s = uniform_grid(n)
    N = n - 1
    h = 1.0 / N
    c, be, kappa = params.tension, params.coriolis / 2.0, params.kappa
    off = 3                      # extended index of node 0
    size = 2 * N
    X = sp.lil_matrix((N + 6, size))
    for i in range(1, N + 1):
        X[off + i, i - 1] = 1.0

    # v'(0) and v'''(0) from one-sided stencils; v_0 = 0 drops out
    left = np.arange(LEFT_POINTS)
    d1 = _weights(0, left, 1) / h
    d3 = _weights(0, left, 3) / h**3 if LEFT_SIXTH else np.zeros(LEFT_POINTS)
    # left ghosts from w(0) = w''(0) = 0 and the equation of motion at s=0:
    # w'''' = -2 be v', w^(6) = c w'''' - 2 be v'''
    for j in (1, 2, 3):
        row = off - j
        X[row, j - 1] = -1.0
        a4 = (j * h) ** 4 / 12.0
        a6 = (j * h) ** 6 / 360.0 if LEFT_SIXTH else 0.0
        for m in range(1, LEFT_POINTS):
            X[row, N + m - 1] += a4 * (-2 * be * d1[m]) + a6 * (c * (-2 * be * d1[m]) - 2 * be * d3[m])

    # right ghosts w_{N+1}, w_{N+2} from the two feedback conditions at s=1.
    # A ghost error e shows up as e / h^4 in the fourth difference, so these
    # stencils are wide.
    window = np.arange(N - GHOST_REACH, N + 3)
    c1 = _weights(N, window, 1) / h
    c2 = _weights(N, window, 2) / h**2
    c3 = _weights(N, window, 3) / h**3
    vnodes = np.arange(N - SLOPE_POINTS + 1, N + 1)
    vw = _weights(N, vnodes, 1) / h
    rows_w = np.vstack([c2[:-2], c3[:-2] - c * c1[:-2]])
    rows_g = np.vstack([c2[-2:], c3[-2:] - c * c1[-2:]])
    inv = np.linalg.inv(rows_g)
    gw = -inv @ rows_w            # ghost dependence on w at window[:-2]
    gv = -inv[:, 0] * kappa       # ghost dependence on v'(1)
    for gi in range(2):
        row = off + N + 1 + gi
        for node, wt in zip(window[:-2], gw[gi]):
            X[row, node - 1] += wt
        for node, wt in zip(vnodes, vw):
            if node > 0:
                X[row, N + node - 1] += gv[gi] * wt
    X = X.tocsr()

    # fourth and second derivatives at nodes 1..N over the extended vector
    D4 = sp.lil_matrix((N, N + 6))
    D2 = sp.lil_matrix((N, N + 6))
    for i in range(1, N + 1):
        # the last node has only two ghosts to its right: use an 8-point window
        nodes4 = np.arange(N - 5, N + 3) if i == N else np.arange(i - 3, i + 4)
        D4[i - 1, nodes4 + off] = _weights(i, nodes4, 4) / h**4
        nodes2 = np.arange(i - 2, i + 3)
        D2[i - 1, nodes2 + off] = _weights(i, nodes2, 2) / h**2
    # summation-by-parts v' keeps the Coriolis term's discrete flux equal to -be v(1)^2
    Dv = _fd.sbp_first_derivative(N + 1, h)[0][1:, 1:]
    accel_w = (-D4.tocsr() + c * D2.tocsr()) @ X
    accel = accel_w - 2 * be * sp.hstack([sp.csr_matrix((N, N)), Dv])
    top = sp.hstack([sp.csr_matrix((N, N)), sp.identity(N)])
    L = sp.vstack([top, accel]).tocsr()
    L.eliminate_zeros()
    return MolOperator(params, s, L, X)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of a method-of-lines run; behaves as a sequence of states."""

    times: np.ndarray
    states: tuple
    rates: tuple = field(repr=False)
    params: TubeParams = None
    dissipated: np.ndarray = None   # running time integral of the boundary dissipation

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    def __iter__(self):
        return iter(self.states)

    def energy_trace(self) -> EnergyTrace:
        e = np.array([energy(x, self.params) for x in self.states])
        bv = np.array([float(np.real(x.v[-1])) for x in self.states])
        bvp = np.array([_boundary_slope(x) for x in self.states])
        return EnergyTrace(self.times, e, bv, bvp)

    def power_balance(self):
        """Relative residual of the energy identity at each snapshot."""
        return np.array([power_balance(x, r, self.params).relative_residual
                         for x, r in zip(self.states, self.rates)])

    def energy_budget(self):
        """Integrated energy identity between consecutive snapshots.

        Entry j is ``|E(t_j) - E(t_{j-1}) + int D dt| / E(t_{j-1})`` with D the
        boundary dissipation accumulated at every time step. The first entry
        (no preceding snapshot) is zero.
        """
        e = self.energy_trace().energies
        if self.dissipated is None:
            raise ValueError("trajectory carries no dissipation record")
        out = np.zeros(len(e))
        spent = np.diff(self.dissipated)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[1:] = np.where(e[:-1] > 0, np.abs(np.diff(e) + spent) / e[:-1], 0.0)
        return out


def evolve_mol(x0: StateVector, params: TubeParams, t_end, dt, save_every=None,
               operator: MolOperator = None, tol_mono=TOL_MONO) -> Trajectory:
    """Trapezoidal method of lines from x0 to t_end with step dt.

    Snapshots are kept every ``save_every`` steps (default: about 200 per run).
    Energy growth beyond ``tol_mono`` between snapshots raises StepUnstable.
    """
    if dt <= 0 or t_end < 0:
        raise ValueError("need dt > 0 and t_end >= 0")
    op = operator or mol_operator(params, x0.n)
    if len(op.s) != x0.n:
        raise ValueError("operator grid does not match the initial state")
    steps = int(round(t_end / dt))
    if steps * dt < t_end - 1e-12 * max(1.0, t_end):
        steps += 1
    dt = t_end / steps if steps else dt
    save_every = save_every or max(1, steps // 200)
    dtype = float if x0.is_real else complex
    N = x0.n - 1
    # trapezoidal rule on the second-order form: only v is solved for, with
    # S = I - dt/2 B - dt^2/4 A, which is far better conditioned than the
    # first-order matrix and keeps roundoff out of the stiff modes
    A = op.L[N:, :N].astype(dtype)
    B = op.L[N:, N:].astype(dtype)
    eye = sp.identity(N, format="csc", dtype=dtype)
    lu = splu((eye - 0.5 * dt * B - 0.25 * dt * dt * A).tocsc())
    explicit = (eye + 0.5 * dt * B).tocsr()
    y = op.pack(x0).astype(dtype)
    w, v = y[:N].copy(), y[N:].copy()
    times, states, rates = [0.0], [op.unpack(y)], [op.rate(op.unpack(y))]
    e_prev = energy(states[0], params)
    slope_w = _weights(N, np.arange(N - SLOPE_POINTS + 1, N + 1), 1) * N
    be, kappa = params.coriolis / 2.0, params.kappa

    def flux(v):
        return be * abs(v[-1]) ** 2 + kappa * abs(slope_w @ v[-SLOPE_POINTS:]) ** 2

    spent, spent_log = 0.0, [0.0]
    d_old = flux(v)
    for k in range(1, steps + 1):
        v_new = lu.solve(explicit @ v + A @ (dt * w + 0.25 * dt * dt * v))
        w += 0.5 * dt * (v + v_new)
        v = v_new
        d_new = flux(v)
        spent += 0.5 * dt * (d_old + d_new)
        d_old = d_new
        if k % save_every == 0 or k == steps:
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
                raise NonFinite(f"method of lines diverged at t={k * dt:.6g}")
            x = op.unpack(np.concatenate([w, v]))
            e = energy(x, params)
            if e > e_prev * (1.0 + tol_mono) + 1e-300:
                raise StepUnstable(f"energy grew by {e / e_prev - 1:.3g} at t={k * dt:.6g}")
            e_prev = e
            times.append(k * dt)
            states.append(x)
            rates.append(op.rate(x))
            spent_log.append(spent)
    log.debug("method of lines: %d steps of %.3g", steps, dt)
    return Trajectory(np.array(times), tuple(states), tuple(rates), params,
                      np.array(spent_log))


def semidiscrete_abscissa(op: MolOperator) -> float:
    """Largest real part of the semi-discrete generator (dense eigensolve)."""
    return float(np.linalg.eigvals(op.L.toarray()).real.max())


# ----------------------------------------------------------------------------
# initial data


PROFILES = ("modal", "mode", "smooth")


def pin_left(values, s):
    """Remove a residual value at s=0 with a linear correction.

    Closed-form modes carry w(0) at the 1e-12 level; simply zeroing the first
    node would leave a kink that fourth differences amplify by h^-4, whereas
    a linear function has no second or fourth derivative.
    """
    values = np.array(values)
    return values - values[0] * (1.0 - s)


def modal_profile(vectors, count=20, decay=2.0, phases=None) -> StateVector:
    """Real initial state Re sum_n a_n x_n over the first ``count`` upper-half modes.

    ``vectors`` is a sequence of :class:`EnergyEigenvector`; only those with
    Im lambda > 0 are used, in order. Amplitudes fall off like (n+1)^-decay.
    """
    upper = [x for x in vectors if x.lam.imag > 0][:count]
    if not upper:
        raise ValueError("no upper-half-plane modes supplied")
    s = upper[0].mode.s
    w = np.zeros(len(s), dtype=complex)
    v = np.zeros(len(s), dtype=complex)
    for n, x in enumerate(upper):
        a = (n + 1.0) ** -decay
        if phases is not None:
            a *= np.exp(1j * phases[n])
        w += a * x.top
        v += a * x.bottom
    return StateVector(pin_left(np.real(w), s), pin_left(np.real(v), s), s)


def mode_profile(vector: EnergyEigenvector) -> StateVector:
    """Real part of one energy eigenvector."""
    s = vector.mode.s
    return StateVector(pin_left(np.real(vector.top), s), pin_left(np.real(vector.bottom), s), s)


def smooth_profile(params: TubeParams, n=DEFAULT_GRID) -> StateVector:
    """A^{-1} applied to a smooth state; satisfies the boundary conditions of A."""
    from .modes import apply_A_inverse

    s = uniform_grid(n)
    xt = StateVector(s * s * np.sin(0.5 * math.pi * s), np.cos(0.5 * math.pi * s) - 0.5, s)
    return apply_A_inverse(xt, params)
