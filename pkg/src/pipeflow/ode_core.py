"""Fundamental system of the quartic spectral ODE and the characteristic determinant.

For complex ``lambda`` the eigenfunction equation is

    w'''' - c w'' + 2 lambda beta eta w' + lambda**2 w = 0,   c = gamma - eta**2,

with boundary forms w(0), w''(0), w''(1) + lambda kappa w'(1), w'''(1) - c w'(1).

Canonical columns carry the initial data ``w^(k)(0) = delta_{k,r}``. Solutions
grow like ``exp(Re mu)`` where ``mu`` runs over the roots of the characteristic
quartic, so the system is integrated with that growth factored out and the
factor is reported separately as a scaling.

The determinant only couples the two columns ``r = 1, 3`` (the left conditions
pick out the other two), and forming it from separately integrated columns
cancels catastrophically once ``|rho|`` exceeds a few units. It is therefore
computed from the exterior square of the first-order system: the six
Pluecker coordinates ``p_ij = y1_i y3_j - y1_j y3_i`` obey a linear ODE of their
own, and the determinant is a fixed linear form in ``p(1)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import _rk
from .errors import NonFinite, StiffnessFailure
from .model import TubeParams

log = logging.getLogger(__name__)

TOL_ODE_REL = 1e-11
TOL_ODE_ABS = 1e-13

_PAIRS = list(combinations(range(4), 2))
_PAIR_INDEX = {p: i for i, p in enumerate(_PAIRS)}


@dataclass(frozen=True)
class BoundaryState:
    """Value and first three derivatives of one solution at one end."""

    w: complex
    w1: complex
    w2: complex
    w3: complex

    def __post_init__(self):
        if not all(np.isfinite(x) for x in (self.w, self.w1, self.w2, self.w3)):
            raise NonFinite("boundary state has non-finite entries")

    def as_array(self):
        return np.array([self.w, self.w1, self.w2, self.w3])


def companion(lam, params: TubeParams):
    """First-order form of the spectral ODE for the state (w, w', w'', w''')."""
    lam = complex(lam)
    M = np.zeros((4, 4), dtype=complex)
    M[0, 1] = M[1, 2] = M[2, 3] = 1.0
    M[3, 0] = -lam**2
    M[3, 1] = -lam * params.coriolis
    M[3, 2] = params.tension
    return M


def characteristic_roots(lam, params: TubeParams):
    """Roots of mu^4 - c mu^2 + 2 lambda beta eta mu + lambda^2."""
    lam = complex(lam)
    return np.roots([1.0, 0.0, -params.tension, lam * params.coriolis, lam**2])


def growth_shift(lam, params: TubeParams, k=1):
    """Sum of the ``k`` largest real parts of the characteristic roots (at least 0)."""
    re = np.sort(characteristic_roots(lam, params).real)[::-1]
    return max(0.0, float(re[:k].sum()))


def compound_matrix(M):
    """Second exterior power of a 4x4 matrix acting on Pluecker coordinates."""
    C = np.zeros((6, 6), dtype=complex)

    def put(row, i, j, coef):
        if i == j:
            return
        if i < j:
            C[row, _PAIR_INDEX[(i, j)]] += coef
        else:
            C[row, _PAIR_INDEX[(j, i)]] -= coef

    for row, (i, j) in enumerate(_PAIRS):
        for k in range(4):
            put(row, k, j, M[i, k])
            put(row, i, k, M[j, k])
    return C


def boundary_rows(lam, params: TubeParams):
    """Coefficient rows of the two right-end boundary forms over (w, w', w'', w''')."""
    b3 = np.array([0.0, lam * params.kappa, 1.0, 0.0], dtype=complex)
    b4 = np.array([0.0, -params.tension, 0.0, 1.0], dtype=complex)
    return b3, b4


def _check_status(status, lam):
    if status == _rk.STATUS_OK:
        return
    if status == _rk.STATUS_NONFINITE:
        raise NonFinite(f"non-finite values integrating at |lambda|={abs(lam):.6g}")
    raise StiffnessFailure(f"step size underflow integrating at |lambda|={abs(lam):.6g}")


@dataclass(frozen=True, eq=False)
class FundamentalSystem:
    """Boundary data of the four canonical columns.

    ``at1[r]`` holds column ``r`` at s=1 divided by ``scaling[r]``; the true
    boundary data are ``at1[r].as_array() * scaling[r]``.
    """

    at0: tuple
    at1: tuple
    lam: complex
    scaling: np.ndarray

    def matrix(self, end=1, scaled=True):
        """4x4 array with rows = derivative order, columns = solution index."""
        states = self.at0 if end == 0 else self.at1
        Y = np.column_stack([b.as_array() for b in states])
        if end == 1 and not scaled:
            Y = Y * self.scaling
        return Y

    def wronskian(self, end=1):
        """Wronskian of the unscaled columns at s=0 or s=1."""
        if end == 0:
            return complex(np.linalg.det(self.matrix(0)))
        return complex(np.linalg.det(self.matrix(1)) * np.prod(self.scaling))


def fundamental_system(lam, params: TubeParams, rtol=TOL_ODE_REL, atol=TOL_ODE_ABS,
                       stops=None):
    """Integrate the four canonical columns from s=0 to s=1.

    With ``stops`` given, also returns the (unscaled) column values at those
    points as a second element.
    """
    lam = complex(lam)
    sigma = growth_shift(lam, params)
    M = companion(lam, params) - sigma * np.eye(4)
    pts = np.asarray([1.0] if stops is None else stops, dtype=float)
    if pts[-1] != 1.0:
        pts = np.append(pts, 1.0)
    Y, _, at_stops, runmax, status = _rk.integrate(M, np.eye(4), pts, rtol, atol)
    _check_status(status, lam)
    if not np.all(np.isfinite(Y)):
        raise NonFinite(f"fundamental system not finite at lambda={lam}")
    Yn = Y / runmax
    scaling = runmax * math.exp(sigma)
    eye = np.eye(4)
    fs = FundamentalSystem(
        at0=tuple(BoundaryState(*eye[:, r]) for r in range(4)),
        at1=tuple(BoundaryState(*Yn[:, r]) for r in range(4)),
        lam=lam,
        scaling=scaling,
    )
    if stops is None:
        return fs
    values = at_stops * np.exp(sigma * pts)[:, None, None]
    return fs, values[: len(stops)]


@dataclass(frozen=True, eq=False)
class DeterminantEval:
    """Characteristic determinant in scaled form.

    The true determinant is ``mantissa * exp(log_scale)``. ``magnitude`` is the
    size of the terms that were summed, so ``|mantissa| / magnitude`` is a
    relative residual.
    """

    lam: complex
    mantissa: complex
    log_scale: float
    magnitude: float
    mesh: np.ndarray = field(repr=False)
    shift: float = 0.0

    @property
    def value(self) -> complex:
        return self.mantissa * math.exp(self.log_scale)

    @property
    def log10_scale(self) -> float:
        return self.log_scale / math.log(10.0)

    @property
    def residual(self) -> float:
        return abs(self.mantissa) / self.magnitude if self.magnitude > 0 else abs(self.mantissa)


def _contract(lam, params, P):
    b3, b4 = boundary_rows(lam, params)
    weights = np.array([b3[i] * b4[j] - b3[j] * b4[i] for i, j in _PAIRS])
    terms = weights * P
    return -complex(terms.sum()), float(np.abs(terms).sum())


def evaluate_determinant(lam, params: TubeParams, mesh=None, shift=None,
                         rtol=TOL_ODE_REL, atol=TOL_ODE_ABS) -> DeterminantEval:
    """Evaluate the determinant, optionally replaying a fixed mesh and growth shift."""
    lam = complex(lam)
    if shift is None:
        shift = growth_shift(lam, params, k=2)
    C = compound_matrix(companion(lam, params)) - shift * np.eye(6)
    p0 = np.zeros((6, 1), dtype=complex)
    p0[_PAIR_INDEX[(1, 3)], 0] = 1.0
    if mesh is None:
        P, mesh, _, _, status = _rk.integrate(C, p0, (1.0,), rtol, atol)
        _check_status(status, lam)
        mesh = mesh.copy()
    else:
        P, _ = _rk.replay(C, p0, mesh)
    P = P[:, 0]
    if not np.all(np.isfinite(P)):
        raise NonFinite(f"determinant not finite at lambda={lam}")
    mantissa, magnitude = _contract(lam, params, P)
    return DeterminantEval(lam, mantissa, float(shift), magnitude, mesh, float(shift))


def characteristic_determinant(lam, params: TubeParams) -> complex:
    """Determinant of the four boundary forms applied to the canonical columns.

    Equivalent to the 4x4 determinant with rows w(0), w''(0),
    w''(1) + lambda kappa w'(1), w'''(1) - c w'(1); use
    :func:`evaluate_determinant` for the scaled form.
    """
    return evaluate_determinant(lam, params).value


def derivative_step(lam):
    return max(1e-6, 1e-8 * abs(lam))


def determinant_with_derivative(lam, params: TubeParams, rtol=TOL_ODE_REL):
    """Scaled determinant and its lambda-derivative on a common mesh and scale.

    Returns ``(eval, d_mantissa)`` where the true derivative is
    ``d_mantissa * exp(eval.log_scale)``.
    """
    base = evaluate_determinant(lam, params, rtol=rtol)
    h = derivative_step(lam)
    plus = evaluate_determinant(lam + h, params, base.mesh, base.shift)
    minus = evaluate_determinant(lam - h, params, base.mesh, base.shift)
    return base, (plus.mantissa - minus.mantissa) / (2.0 * h)


def determinant_derivative(lam, params: TubeParams, h=None) -> complex:
    """Central difference of the determinant with identical mesh and rescaling."""
    base = evaluate_determinant(lam, params)
    h = derivative_step(lam) if h is None else h
    plus = evaluate_determinant(lam + h, params, base.mesh, base.shift)
    minus = evaluate_determinant(lam - h, params, base.mesh, base.shift)
    return (plus.mantissa - minus.mantissa) / (2.0 * h) * math.exp(base.log_scale)


def wronskian_profile(lam, params: TubeParams, points):
    """Wronskian of the canonical columns at the given s-points."""
    _, values = fundamental_system(lam, params, stops=points)
    return np.array([np.linalg.det(Y) for Y in values])


def delta_segment(params: TubeParams, start, stop, count):
    """Rows (re_lambda, im_lambda, re_delta, im_delta, log10_scale) along a segment."""
    rows = []
    for lam in np.linspace(complex(start), complex(stop), int(count)):
        ev = evaluate_determinant(lam, params)
        rows.append((lam.real, lam.imag, ev.mantissa.real, ev.mantissa.imag, ev.log10_scale))
    return rows
