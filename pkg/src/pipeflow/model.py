"""Physical parameters, grid states, the energy functional and power balance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import _fd
from .errors import (BetaOutOfRange, GridTooCoarse, NegativeParameter,
                     TensionTooLow)

DEFAULT_GRID = 513


@dataclass(frozen=True)
class TubeParams:
    """Dimensionless tube parameters (tension, flow speed, feedback gain, mass ratio)."""

    gamma: float
    eta: float
    kappa: float
    beta: float

    @property
    def tension(self) -> float:
        """Effective tension ``gamma - eta**2``."""
        return self.gamma - self.eta**2

    @property
    def coriolis(self) -> float:
        """Coefficient ``2*beta*eta`` of the mixed derivative term."""
        return 2.0 * self.beta * self.eta

    def as_dict(self):
        return {"gamma": self.gamma, "eta": self.eta, "kappa": self.kappa, "beta": self.beta}


def validate_params(gamma, eta, kappa, beta) -> TubeParams:
    """Check the admissible parameter set and return a :class:`TubeParams`.

    Raises the subclass of :class:`~pipeflow.errors.ParameterError` naming the
    first violated condition.
    """
    vals = {"gamma": gamma, "eta": eta, "kappa": kappa, "beta": beta}
    for name, val in vals.items():
        if not math.isfinite(float(val)):
            raise NegativeParameter(f"{name} must be finite, got {val!r}")
    gamma, eta, kappa, beta = (float(v) for v in (gamma, eta, kappa, beta))
    if eta < 0:
        raise NegativeParameter(f"eta must be >= 0, got {eta}")
    if kappa < 0:
        raise NegativeParameter(f"kappa must be >= 0, got {kappa}")
    if not 0.0 < beta < 1.0:
        raise BetaOutOfRange(f"beta must lie in (0, 1), got {beta}")
    if not gamma > eta**2:
        raise TensionTooLow(f"need gamma > eta**2, got gamma={gamma}, eta**2={eta**2}")
    return TubeParams(gamma, eta, kappa, beta)


def uniform_grid(n=DEFAULT_GRID):
    if n < 5:
        raise GridTooCoarse(f"grid needs at least 3 interior nodes, got {n} nodes")
    return np.linspace(0.0, 1.0, n)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Deflection ``w`` and velocity ``v`` sampled on a uniform grid over [0, 1]."""

    w: np.ndarray
    v: np.ndarray
    s: np.ndarray = field(default=None)

    def __post_init__(self):
        w = np.asarray(self.w)
        v = np.asarray(self.v)
        if w.shape != v.shape or w.ndim != 1:
            raise ValueError("w and v must be 1-D arrays of equal length")
        s = uniform_grid(len(w)) if self.s is None else np.asarray(self.s, dtype=float)
        if len(s) != len(w):
            raise ValueError("grid and samples differ in length")
        if len(s) < 5:
            raise GridTooCoarse(f"grid needs at least 3 interior nodes, got {len(s)} nodes")
        scale = max(1.0, float(np.max(np.abs(w))))
        if abs(w[0]) > 1e-9 * scale:
            raise ValueError(f"deflection must vanish at s=0, got w(0)={w[0]}")
        for arr in (w, v, s):
            arr.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "s", s)

    @property
    def h(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def n(self) -> int:
        return len(self.s)

    def derivative(self, which, k):
        """k-th s-derivative of ``w`` or ``v`` by fourth-order differences."""
        return _fd.derivative(getattr(self, which), self.h, k)

    def scaled(self, c):
        return StateVector(c * self.w, c * self.v, self.s)

    def __add__(self, other):
        return StateVector(self.w + other.w, self.v + other.v, self.s)

    def __sub__(self, other):
        return StateVector(self.w - other.w, self.v - other.v, self.s)

    @property
    def is_real(self):
        return not (np.iscomplexobj(self.w) or np.iscomplexobj(self.v))


def zero_state(n=DEFAULT_GRID):
    s = uniform_grid(n)
    return StateVector(np.zeros(n), np.zeros(n), s)


def _check_grid(state):
    if state.n < 5:
        raise GridTooCoarse(f"grid needs at least 3 interior nodes, got {state.n} nodes")


def inner(a: StateVector, b: StateVector, params: TubeParams) -> complex:
    """Energy-space inner product, linear in ``a`` and antilinear in ``b``."""
    _check_grid(a)
    c = params.tension
    h = a.h
    integrand = (_fd.derivative(a.w, h, 2) * np.conj(_fd.derivative(b.w, h, 2))
                 + c * _fd.derivative(a.w, h, 1) * np.conj(_fd.derivative(b.w, h, 1))
                 + a.v * np.conj(b.v))
    return complex(simpson(integrand, x=a.s))


def energy_norm(state: StateVector, params: TubeParams) -> float:
    """Norm of the energy space; its square is twice :func:`energy`."""
    return math.sqrt(max(inner(state, state, params).real, 0.0))


def energy(state: StateVector, params: TubeParams) -> float:
    """Vibrational energy ``0.5 * int(w''^2 + (gamma - eta^2) w'^2 + v^2) ds``.

    Complex states use squared moduli. Derivatives are fourth-order finite
    differences, the integral is composite Simpson.
    """
    _check_grid(state)
    h = state.h
    w1 = _fd.derivative(state.w, h, 1)
    w2 = _fd.derivative(state.w, h, 2)
    integrand = np.abs(w2)**2 + params.tension * np.abs(w1)**2 + np.abs(state.v)**2
    return 0.5 * float(simpson(integrand, x=state.s))


@dataclass(frozen=True)
class PowerBalance:
    rate: float          # dE/dt by the chain rule through the quadrature
    dissipation: float   # beta*eta*|v(1)|^2 + kappa*|v'(1)|^2
    scale: float         # sum of absolute integrand contributions

    @property
    def residual(self):
        return abs(self.rate + self.dissipation)

    @property
    def relative_residual(self):
        return self.residual / self.scale if self.scale > 0 else 0.0


def power_balance(state: StateVector, state_dot: StateVector, params: TubeParams) -> PowerBalance:
    """Both sides of the energy identity for a state and its time derivative."""
    _check_grid(state)
    h = state.h
    c = params.tension
    dw = _fd.derivative
    terms = (dw(state.w, h, 2) * np.conj(dw(state_dot.w, h, 2)),
             c * dw(state.w, h, 1) * np.conj(dw(state_dot.w, h, 1)),
             state.v * np.conj(state_dot.v))
    rate = float(simpson(sum(terms), x=state.s).real)
    scale = float(sum(simpson(np.abs(t), x=state.s) for t in terms))
    _, wts = _fd.boundary_weights(state.n, 1, h, end=1)
    v_slope = np.dot(wts, state.v[-len(wts):])
    dissipation = params.beta * params.eta * abs(state.v[-1])**2 + params.kappa * abs(v_slope)**2
    return PowerBalance(rate, float(dissipation), scale)


def power_balance_residual(state: StateVector, state_dot: StateVector, params: TubeParams) -> float:
    """``|dE/dt + beta*eta*v(1)^2 + kappa*v'(1)^2|`` for a state and its time derivative."""
    return power_balance(state, state_dot, params).residual


def pde_rate(state: StateVector, params: TubeParams) -> StateVector:
    """Time derivative ``(v, -w'''' + c w'' - 2 beta eta v')`` by finite differences."""
    h = state.h
    a = (-_fd.derivative(state.w, h, 4) + params.tension * _fd.derivative(state.w, h, 2)
         - params.coriolis * _fd.derivative(state.v, h, 1))
    return StateVector(np.asarray(state.v), a, state.s)


STATE_COLUMNS = ("s", "re_w", "im_w", "re_v", "im_v")


def state_to_csv(state: StateVector) -> str:
    """CSV text with columns s, re_w, im_w, re_v, im_v in 17-digit decimal."""
    w = np.asarray(state.w, dtype=complex)
    v = np.asarray(state.v, dtype=complex)
    lines = [",".join(STATE_COLUMNS)]
    for row in zip(state.s, w.real, w.imag, v.real, v.imag):
        lines.append(",".join("%.17g" % x for x in row))
    return "\n".join(lines) + "\n"


def state_from_csv(text) -> StateVector:
    """Inverse of :func:`state_to_csv`; real states come back real."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = tuple(h.strip() for h in lines[0].split(","))
    if header != STATE_COLUMNS:
        raise ValueError(f"expected columns {STATE_COLUMNS}, got {header}")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    s, rw, iw, rv, iv = data.T
    if np.any(iw) or np.any(iv):
        return StateVector(rw + 1j * iw, rv + 1j * iv, s)
    return StateVector(rw, rv, s)
