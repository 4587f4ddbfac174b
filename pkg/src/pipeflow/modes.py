"""Eigenfunctions, energy-space eigenvectors, the inverse of the undamped operator,
benchmark families and Riesz-basis diagnostics.

An eigenfunction is a combination of the four exponentials exp(mu_j s) where
mu_j are the characteristic roots. Each exponential is anchored at the end
where it is largest, so evaluation never overflows, and all derivatives are
available in closed form.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from . import _fd
from .errors import (GramSingular, GridTooCoarse, IndexMismatch,
                     RankDeficiencyAmbiguous, SolverError)
from .model import DEFAULT_GRID, StateVector, TubeParams, uniform_grid
from .ode_core import characteristic_roots, fundamental_system
from .spectrum import Eigenvalue, TOL_ROOT

log = logging.getLogger(__name__)

TOL_BC = 1e-7
RANK_TOL = 1e-6
GRAM_LIMIT = 1e8
QUAD_NODES = 400
ROOT_SEPARATION = 1e-6


@lru_cache(maxsize=4)
def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def quad_nodes(n=QUAD_NODES):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    return _gauss(n)


@dataclass(frozen=True, eq=False)
class ModeShape:
    """Closed-form eigenfunction w(s) = sum_j a_j exp(mu_j (s - anchor_j)).

    ``samples`` holds w on the uniform grid ``s``; :meth:`derivative` evaluates
    any derivative up to order four anywhere in [0, 1].
    """

    eigenvalue: Eigenvalue
    coeffs: np.ndarray
    exponents: np.ndarray
    anchors: np.ndarray
    s: np.ndarray
    normalization: str = "l2_unit"
    phase: str = "w1_at_0_real_positive"
    samples: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", self.derivative(0, self.s))

    @property
    def lam(self) -> complex:
        return self.eigenvalue.lam

    def derivative(self, k, s=None):
        s = self.s if s is None else np.asarray(s, dtype=float)
        e = np.exp(np.multiply.outer(s, self.exponents) - self.exponents * self.anchors)
        return e @ (self.coeffs * self.exponents**k)

    def l2_norm(self):
        x, wts = quad_nodes()
        return math.sqrt(float(np.sum(wts * np.abs(self.derivative(0, x)) ** 2)))

    def scaled(self, factor) -> "ModeShape":
        return ModeShape(self.eigenvalue, self.coeffs * factor, self.exponents, self.anchors,
                         self.s, self.normalization, self.phase)

    def conjugate(self) -> "ModeShape":
        ev = Eigenvalue(self.lam.conjugate(), -self.eigenvalue.index, self.eigenvalue.mode,
                        self.eigenvalue.residual, self.eigenvalue.certified,
                        self.eigenvalue.provenance)
        return ModeShape(ev, self.coeffs.conj(), self.exponents.conj(), self.anchors, self.s,
                         self.normalization, self.phase)

    def boundary_residuals(self, params: TubeParams):
        """Moduli of the four boundary forms relative to the mode's derivative sizes."""
        ends = np.array([0.0, 1.0])
        d = [self.derivative(k, ends) for k in range(4)]
        lam, c = self.lam, params.tension
        scale = [max(1.0, np.abs(self.derivative(k, quad_nodes()[0])).max()) for k in range(4)]
        return np.array([
            abs(d[0][0]) / scale[0],
            abs(d[2][0]) / scale[2],
            abs(d[2][1] + lam * params.kappa * d[1][1]) / max(scale[2], abs(lam) * params.kappa * scale[1]),
            abs(d[3][1] - c * d[1][1]) / max(scale[3], c * scale[1]),
        ])

    def ode_residual(self, params: TubeParams, s=None):
        """Pointwise residual of the eigenvalue ODE from the closed-form derivatives."""
        lam = self.lam
        return (self.derivative(4, s) - params.tension * self.derivative(2, s)
                + lam * params.coriolis * self.derivative(1, s) + lam**2 * self.derivative(0, s))


def _anchors(mu):
    """Anchor growing exponentials at s=1; roundoff-level real parts count as zero."""
    tol = 1e-10 * max(1.0, float(np.abs(mu).max()))
    return np.where(mu.real > tol, 1.0, 0.0)


def exponential_boundary_matrix(lam, params: TubeParams, mu=None, rows="full"):
    """Boundary forms applied to the anchored exponentials, rows normalised.

    ``rows`` selects the right-end pair: "full" (feedback law), "guided"
    (w'(1) = 0) or "moment_free" (w''(1) = 0); the shear condition is common.
    """
    mu = characteristic_roots(lam, params) if mu is None else mu
    anc = _anchors(mu)
    e0 = np.exp(-mu * anc)
    e1 = np.exp(mu * (1.0 - anc))
    c = params.tension
    if rows == "full":
        r3 = (mu**2 + lam * params.kappa * mu) * e1
    elif rows == "guided":
        r3 = mu * e1
    elif rows == "moment_free":
        r3 = mu**2 * e1
    else:
        raise ValueError(f"unknown boundary set {rows!r}")
    B = np.array([e0, mu**2 * e0, r3, (mu**3 - c * mu) * e1])
    return B / np.abs(B).max(axis=1, keepdims=True)


def _null_vector(B):
    _, sv, vh = np.linalg.svd(B)
    if sv[-2] < RANK_TOL * sv[0]:
        raise RankDeficiencyAmbiguous(
            f"two small singular values {sv[-2]:.3g}, {sv[-1]:.3g}: possible multiple eigenvalue")
    return vh[-1].conj(), sv


def _normalise(coeffs, mu, anc):
    """Scale to unit L2 norm with w'(0) real positive (largest sample as fallback)."""
    x, wts = quad_nodes()
    E = np.exp(np.multiply.outer(x, mu) - mu * anc)
    vals = E @ coeffs
    coeffs = coeffs / math.sqrt(float(np.sum(wts * np.abs(vals) ** 2)))
    slope = np.sum(coeffs * mu * np.exp(-mu * anc))
    if abs(slope) >= 1e-10:
        ref = slope
    else:
        vals = E @ coeffs
        ref = vals[np.argmax(np.abs(vals))]
    return coeffs * (abs(ref) / ref)


def _canonical_fallback(ev, params, s):
    """Mode from canonical columns when characteristic roots nearly coincide."""
    lam = ev.lam
    fs, values = fundamental_system(lam, params, stops=s[1:])
    Y1 = fs.matrix(1, scaled=False)
    b3 = np.array([0, lam * params.kappa, 1, 0])
    b4 = np.array([0, -params.tension, 0, 1])
    # left conditions remove columns 0 and 2; combine columns 1 and 3
    a1, a3 = -(b3 @ Y1[:, 3]), b3 @ Y1[:, 1]
    if abs(a1) + abs(a3) == 0:
        a1, a3 = -(b4 @ Y1[:, 3]), b4 @ Y1[:, 1]
    w = np.concatenate([[0.0], a1 * values[:, 0, 1] + a3 * values[:, 0, 3]])
    return w


def build_mode(ev: Eigenvalue, params: TubeParams, grid=None) -> ModeShape:
    """Eigenfunction for a computed eigenvalue, L2-normalised with w'(0) > 0."""
    s = uniform_grid(DEFAULT_GRID) if grid is None else np.asarray(grid, dtype=float)
    if ev.residual > 1e3 * TOL_ROOT:
        log.warning("building a mode at lambda=%s with residual %.3g", ev.lam, ev.residual)
    mu = characteristic_roots(ev.lam, params)
    gaps = np.abs(mu[:, None] - mu[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() < ROOT_SEPARATION * max(1.0, np.abs(mu).max()):
        raise SolverError(
            f"characteristic roots coincide at lambda={ev.lam}; exponential form unavailable "
            "(use canonical_mode_samples)")
    anc = _anchors(mu)
    coeffs, _ = _null_vector(exponential_boundary_matrix(ev.lam, params, mu))
    coeffs = _normalise(coeffs, mu, anc)
    return ModeShape(ev, coeffs, mu, anc, s)


def canonical_mode_samples(ev: Eigenvalue, params: TubeParams, grid=None):
    """Grid samples of the eigenfunction synthesised from canonical columns (low modes only)."""
    s = uniform_grid(DEFAULT_GRID) if grid is None else np.asarray(grid, dtype=float)
    w = _canonical_fallback(ev, params, s)
    w = w / math.sqrt(simpson(np.abs(w) ** 2, x=s))
    slope = _fd.derivative(w, s[1] - s[0], 1)[0]
    return w * (abs(slope) / slope)


@dataclass(frozen=True, eq=False)
class EnergyEigenvector:
    """x = (w / lambda, w) for one mode, with its energy-space norm."""

    mode: ModeShape
    norm_X: float

    @property
    def lam(self):
        return self.mode.lam

    @property
    def top(self):
        return self.mode.samples / self.mode.lam

    @property
    def bottom(self):
        return self.mode.samples

    def components(self, s):
        """(w, w', w'', v) of the vector at points ``s``."""
        m, lam = self.mode, self.mode.lam
        return m.derivative(0, s) / lam, m.derivative(1, s) / lam, m.derivative(2, s) / lam, m.derivative(0, s)

    def as_state(self) -> StateVector:
        return StateVector(self.top, self.bottom, self.mode.s)

    def conjugate(self) -> "EnergyEigenvector":
        return EnergyEigenvector(self.mode.conjugate(), self.norm_X)


@dataclass(frozen=True, eq=False)
class PencilEigenvector:
    """y = (w, w'(1)) for the pencil formulation."""

    w_part: np.ndarray
    trace: complex


def energy_inner(x: EnergyEigenvector, y: EnergyEigenvector, params: TubeParams) -> complex:
    """Energy-space inner product of two closed-form vectors (linear in x)."""
    s, wts = quad_nodes()
    a, b = x.components(s), y.components(s)
    integrand = a[2] * np.conj(b[2]) + params.tension * a[1] * np.conj(b[1]) + a[3] * np.conj(b[3])
    return complex(np.sum(wts * integrand))


def energy_vector(mode: ModeShape, params: TubeParams) -> EnergyEigenvector:
    """Energy-space eigenvector (w/lambda, w) and its norm."""
    x = EnergyEigenvector(mode, 0.0)
    return EnergyEigenvector(mode, math.sqrt(energy_inner(x, x, params).real))


def pencil_vector(mode: ModeShape) -> PencilEigenvector:
    return PencilEigenvector(mode.samples, complex(mode.derivative(1, np.array([1.0]))[0]))


def operator_action(x: EnergyEigenvector, params: TubeParams, s=None):
    """Block action (v, -w'''' + c w'' - 2 beta eta v') on a closed-form vector."""
    m, lam = x.mode, x.mode.lam
    s = m.s if s is None else s
    top = m.derivative(0, s)
    bottom = (-m.derivative(4, s) + params.tension * m.derivative(2, s)) / lam - params.coriolis * m.derivative(1, s)
    return top, bottom


@dataclass(frozen=True, eq=False)
class InverseParts:
    """Closed-form output of the inverse together with its exact s-derivatives."""

    w: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    bottom: np.ndarray
    bottom_slope: float
    b: float


def _inverse_parts(xtilde: StateVector, params: TubeParams) -> InverseParts:
    s = xtilde.s
    c = params.tension
    k = math.sqrt(c)
    wt, vt = np.asarray(xtilde.w), np.asarray(xtilde.v)
    h = xtilde.h
    inner = _fd.cumulative_integral(vt, h)
    tail = inner[-1] - inner
    V = _fd.cumulative_integral(tail, h)
    conv, conv_slope = _fd.cumulative_sinh_convolution(V, k, h)
    idx, wts = _fd.boundary_weights(len(s), 1, h, end=1)
    slope1 = np.dot(wts, wt[idx])
    b = (-k * conv[-1] - V[-1] - params.kappa * slope1) / (c * math.sinh(k))
    w = b * np.sinh(k * s) + conv / k
    w[0] = 0.0
    w1 = b * k * np.cosh(k * s) + conv_slope / k
    # w'' - c w = V, and one more derivative gives V' = tail
    return InverseParts(w, w1, c * w + V, c * w1 + tail, wt.copy(), slope1, b)


def apply_A_inverse(xtilde: StateVector, params: TubeParams) -> StateVector:
    """Closed-form inverse of the undamped operator A(w, v) = (v, -w'''' + c w'').

    The result (w, v) has v = w~ and w = b sinh(sqrt(c) s)
    + c^(-1/2) int_0^s sinh(sqrt(c)(s - r)) V(r) dr, where
    V(s) = int_0^s dt int_t^1 v~(r) dr and b enforces the right-end conditions.
    Running integrals use eighth-order local interpolants and the convolution
    is advanced with the exact hyperbolic propagator.
    """
    if xtilde.n < 9:
        raise GridTooCoarse(f"inverse needs at least 9 grid points, got {xtilde.n}")
    parts = _inverse_parts(xtilde, params)
    return StateVector(parts.w, parts.bottom, xtilde.s)


def inverse_boundary_residuals(xtilde: StateVector, params: TubeParams):
    """Residuals of w(0), w''(0), w''(1) + kappa v'(1), w'''(1) - c w'(1) for the inverse.

    Derivatives come from the closed form, not from differencing the samples.
    """
    parts = _inverse_parts(xtilde, params)
    return np.array([
        abs(parts.w[0]),
        abs(parts.w2[0]),
        abs(parts.w2[-1] + params.kappa * parts.bottom_slope),
        abs(parts.w3[-1] - params.tension * parts.w1[-1]),
    ])


def apply_A(state: StateVector, params: TubeParams, order=_fd.ORDER) -> StateVector:
    """Finite-difference action (v, -w'''' + c w'') of the undamped operator."""
    h = state.h
    rate = (-_fd.derivative(state.w, h, 4, order)
            + params.tension * _fd.derivative(state.w, h, 2, order))
    return StateVector(np.asarray(state.v), rate, state.s)


BENCHMARK_VARIANTS = ("guided", "moment_free")


def benchmark_params(params: TubeParams) -> TubeParams:
    """The same tension with the flow coupling removed."""
    return TubeParams(params.gamma, 0.0, params.kappa, params.beta)


def _benchmark_function(alpha, c, variant):
    """Real characteristic function of the flow-free problem in terms of alpha.

    With lambda = i t and t^2 = alpha^2 (alpha^2 + c) the left-admissible
    solutions are sin(alpha s) and sinh(beta s), beta^2 = alpha^2 + c; the
    sinh column is divided by cosh(beta).
    """
    beta = math.sqrt(alpha * alpha + c)
    if variant == "guided":
        return alpha * beta * (alpha**2 + beta**2) * math.cos(alpha)
    return alpha * beta * (-alpha**3 * math.sin(alpha) + beta**3 * math.tanh(beta) * math.cos(alpha))


def _benchmark_alphas(count, c, variant):
    """First ``count`` positive zeros of the benchmark function, by bracketing."""
    roots = []
    step = math.pi / 16
    a = 1e-6
    fa = _benchmark_function(a, c, variant)
    while len(roots) < count:
        b = a + step
        fb = _benchmark_function(b, c, variant)
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(brentq(_benchmark_function, a, b, args=(c, variant), xtol=1e-15, rtol=1e-15))
        a, fa = b, fb
    return roots[:count]


def benchmark_variant(params: TubeParams) -> str:
    """Comparison family matching the right-end condition: moment-free when kappa = 0."""
    return "moment_free" if params.kappa == 0 else "guided"


def benchmark_modes(params: TubeParams, n_max, variant="guided", flow_phase=False, grid=None):
    """Modes of the flow-free comparison problem w'''' - c w'' + lambda^2 w = 0.

    The left conditions are kept; at s=1 the shear condition is paired with
    w'(1) = 0 ("guided", an orthonormal family sqrt(2) sin((n + 1/2) pi s)) or
    with w''(1) = 0 ("moment_free"). ``flow_phase`` multiplies each mode by
    exp(i beta eta s / 2), the transport factor carried by the flow-coupled
    eigenfunctions, which preserves orthonormality.
    """
    if variant not in BENCHMARK_VARIANTS:
        raise ValueError(f"variant must be one of {BENCHMARK_VARIANTS}")
    s = uniform_grid(DEFAULT_GRID) if grid is None else np.asarray(grid, dtype=float)
    bp = TubeParams(params.tension, 0.0, 0.0, params.beta)
    out = []
    for n, alpha in enumerate(_benchmark_alphas(n_max + 1, bp.tension, variant)):
        lam = 1j * alpha * math.sqrt(alpha * alpha + bp.tension)
        mu = characteristic_roots(lam, bp)
        anc = _anchors(mu)
        coeffs, _ = _null_vector(exponential_boundary_matrix(lam, bp, mu, rows=variant))
        if flow_phase:
            shift = 0.5j * params.beta * params.eta
            coeffs = coeffs * np.exp(shift * anc)
            mu = mu + shift
        coeffs = _normalise(coeffs, mu, anc)
        ev = Eigenvalue(lam, index=n + 1, mode=n, certified=False, provenance="benchmark")
        out.append(ModeShape(ev, coeffs, mu, anc, s, phase="w1_at_0_real_positive"))
    return out


def benchmark_tau_values(modes):
    return np.array([math.sqrt(m.lam.imag) for m in modes])


@dataclass(frozen=True)
class Closeness:
    d: np.ndarray
    d_energy: np.ndarray
    tau: np.ndarray

    @property
    def partial_sums(self):
        return np.cumsum(self.d)

    @property
    def weighted(self):
        return self.d * self.tau**2

    @property
    def weighted_energy(self):
        return self.d_energy * self.tau**2


def _aligned_distance(a, b, inner):
    """min over unit phases of ||a - e^{i theta} b||^2 from inner products."""
    ab = inner(a, b)
    val = inner(a, a).real + inner(b, b).real - 2.0 * abs(ab)
    return max(val, 0.0)


def quadratic_closeness(modes, benchmarks, params: TubeParams = None) -> Closeness:
    """Squared L2 and energy-space distances after optimal phase alignment."""
    if len(modes) != len(benchmarks):
        raise IndexMismatch(f"{len(modes)} modes vs {len(benchmarks)} benchmarks")
    for m, b in zip(modes, benchmarks):
        if m.eigenvalue.mode is not None and b.eigenvalue.mode is not None and m.eigenvalue.mode != b.eigenvalue.mode:
            raise IndexMismatch(f"mode {m.eigenvalue.mode} paired with benchmark {b.eigenvalue.mode}")
    x, wts = quad_nodes()

    def l2(a, b):
        return complex(np.sum(wts * a.derivative(0, x) * np.conj(b.derivative(0, x))))

    def en(a, b):
        return energy_inner(EnergyEigenvector(a, 0.0), EnergyEigenvector(b, 0.0), params)

    d = np.array([_aligned_distance(m, b, l2) for m, b in zip(modes, benchmarks)])
    de = np.array([_aligned_distance(m, b, en) for m, b in zip(modes, benchmarks)]) if params else np.full(len(d), np.nan)
    tau = np.array([math.sqrt(abs(b.lam)) for b in benchmarks])
    return Closeness(d, de, tau)


@dataclass(frozen=True, eq=False)
class BiorthogonalSet:
    """Truncated eigenvector family with duals expressed in its own span.

    ``gram[m, k] = <x_m, x_k>``; dual z_n = sum_k conj(inv(gram))[k, n] x_k, so
    that <x_m, z_n> = delta_mn.
    """

    modes: tuple
    gram: np.ndarray
    inverse: np.ndarray
    gram_condition: float
    params: TubeParams

    @property
    def eigenvalues(self):
        return np.array([x.lam for x in self.modes])

    @property
    def dual_coefficients(self):
        return np.conj(self.inverse)

    def biorthogonality_error(self):
        """max |<x_m, z_n> - delta_mn| over the truncated set."""
        pairing = self.gram @ np.conj(self.dual_coefficients)
        return float(np.abs(pairing - np.eye(len(self.modes))).max())

    def coefficients(self, x0: StateVector):
        """Expansion coefficients <x0, z_n> of a grid state."""
        b = np.array([grid_inner(x0, x, self.params) for x in self.modes])
        return self.inverse.T @ b

    def synthesize(self, coeffs, s=None):
        """Grid state sum_n coeffs[n] x_n."""
        x0 = self.modes[0]
        s = x0.mode.s if s is None else s
        w = np.zeros(len(s), dtype=complex)
        v = np.zeros(len(s), dtype=complex)
        for c, x in zip(coeffs, self.modes):
            d0 = x.mode.derivative(0, s)
            w += c * d0 / x.lam
            v += c * d0
        return w, v


def grid_inner(a: StateVector, x: EnergyEigenvector, params: TubeParams) -> complex:
    """<a, x> with a on the grid and x evaluated in closed form on the same grid."""
    s = a.s
    h = a.h
    w1, w2 = _fd.derivative(a.w, h, 1), _fd.derivative(a.w, h, 2)
    m, lam = x.mode, x.lam
    xw1 = m.derivative(1, s) / lam
    xw2 = m.derivative(2, s) / lam
    xv = m.derivative(0, s)
    integrand = w2 * np.conj(xw2) + params.tension * w1 * np.conj(xw1) + np.asarray(a.v) * np.conj(xv)
    return complex(simpson(integrand, x=s))


def biorthogonal_duals(modes, params: TubeParams) -> BiorthogonalSet:
    """Gram matrix of the truncated family and its biorthogonal duals."""
    modes = tuple(modes)
    if len(modes) < 2:
        raise ValueError("need at least two modes")
    n = len(modes)
    G = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            G[i, j] = energy_inner(modes[i], modes[j], params)
            G[j, i] = G[i, j].conjugate()
    cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > GRAM_LIMIT:
        raise GramSingular(f"Gram condition number {cond:.3g} exceeds {GRAM_LIMIT:.0e}")
    return BiorthogonalSet(modes, G, np.linalg.inv(G), cond, params)


def modal_family(spectrum, params: TubeParams, n_modes, grid=None, include_real=True):
    """Energy eigenvectors for real eigenvalues and the first ``n_modes`` conjugate pairs."""
    vecs = []
    if include_real:
        for ev in spectrum.real():
            vecs.append(energy_vector(build_mode(ev, params, grid), params))
    for ev in spectrum.upper()[:n_modes]:
        x = energy_vector(build_mode(ev, params, grid), params)
        vecs += [x, x.conjugate()]
    return vecs
