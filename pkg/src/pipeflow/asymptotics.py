"""Closed-form large-mode asymptotics of the spectrum and the fundamental system.

All formulas are two-term truncations; ``q = (n + 1/2) pi`` throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import KappaZero
from .model import TubeParams

RELIABLE_FROM = 5


class Order(str, Enum):
    LEADING = "leading"
    FIRST_CORRECTION = "first_correction"


@dataclass(frozen=True)
class AsymptoticRho:
    n: int
    rho: complex
    order: Order = Order.FIRST_CORRECTION

    @property
    def reliable(self) -> bool:
        """Low modes are only rough guides and are never used alone as seeds."""
        return self.n >= RELIABLE_FROM

    @property
    def xi(self) -> complex:
        return self.rho - _q(self.n)

    @property
    def lam(self) -> complex:
        return 1j * self.rho**2


@dataclass(frozen=True)
class ChainRho:
    """Benchmark, damped intermediate and full-problem values of rho for one mode."""

    n: int
    tau_tilde: float
    rho_tilde: complex
    rho: complex


def _q(n):
    if n < 0:
        raise ValueError(f"mode index must be >= 0, got {n}")
    return (n + 0.5) * math.pi


def _need_kappa(params):
    if params.kappa == 0:
        raise KappaZero("the asymptotic formulas contain 1/kappa and are undefined at kappa=0")


def _sigma(params):
    """The recurring combination beta^2 eta^2 / 2 + gamma - eta^2."""
    return 0.5 * (params.beta * params.eta) ** 2 + params.tension


def lemma_correction(r, s, params: TubeParams):
    """First-order corrections ``(f_r(s), f_r1(s))`` of the exponential fundamental system.

    Solutions behave like ``exp(rho omega_r s) [1 + f_r + f_r1 / rho + O(rho^-2)]``
    with ``omega_r = i**r``.
    """
    if r not in (1, 2, 3, 4):
        raise ValueError(f"r must be 1..4, got {r}")
    phase = np.exp((-1) ** (r + 1) * 0.5j * params.beta * params.eta * np.asarray(s, dtype=float))
    f = -1.0 + phase
    f1 = ((-1j) ** r / 4.0) * _sigma(params) * np.asarray(s, dtype=float) * phase
    if np.ndim(s) == 0:
        return complex(f), complex(f1)
    return f, f1


def _lemma_derivatives(r, s, params):
    a = (-1) ** (r + 1) * 0.5j * params.beta * params.eta
    k = ((-1j) ** r / 4.0) * _sigma(params)
    e = np.exp(a * s)
    f = -1.0 + e
    df = a * e
    d2f = a * a * e
    f1 = k * s * e
    df1 = k * e + a * k * s * e
    return f, df, d2f, f1, df1


def lemma_ode_residual(r, params: TubeParams, points=101):
    """Largest residual of the first-order system defining ``f_r`` and ``f_r1``.

    Derivatives are analytic, so the result is pure roundoff.
    """
    s = np.linspace(0.0, 1.0, points)
    w = 1j**r
    be = params.beta * params.eta
    f, df, d2f, f1, df1 = _lemma_derivatives(r, s, params)
    first = 4 * w**3 * df + 2j * be * w * (1 + f)
    second = (4 * w**3 * df1 + 2j * be * w * f1 + 6 * w**2 * d2f + 2j * be * df
              - params.tension * w**2 * (1 + f))
    return float(max(np.abs(first).max(), np.abs(second).max()))


def asymptotic_rho(n, params: TubeParams, order=Order.FIRST_CORRECTION) -> AsymptoticRho:
    """Two-term large-n value of rho_n, with lambda_n = i rho_n^2."""
    _need_kappa(params)
    q = _q(n)
    if Order(order) is Order.LEADING:
        return AsymptoticRho(n, complex(q), Order.LEADING)
    be = params.beta * params.eta
    num = _sigma(params) + 2j * be + 2j / params.kappa
    return AsymptoticRho(n, q + num / (4 * q), Order.FIRST_CORRECTION)


def asymptotic_lambda(n, params: TubeParams) -> complex:
    """Eigenvalue asymptote: real part -(beta eta + 1/kappa), imaginary part q^2 + sigma/2."""
    _need_kappa(params)
    q = _q(n)
    re = -(params.beta * params.eta + 1.0 / params.kappa)
    return complex(re, q * q + 0.5 * _sigma(params))


def asymptotic_imag(n, params: TubeParams) -> float:
    """Imaginary part of :func:`asymptotic_lambda`; defined for every kappa."""
    q = _q(n)
    return q * q + 0.5 * _sigma(params)


def benchmark_tau(n, params: TubeParams) -> float:
    """Exact benchmark frequency: tau^2 = q sqrt(q^2 + c) for the guided-end problem."""
    q = _q(n)
    return math.sqrt(q * math.sqrt(q * q + params.tension))


def chain_rho(n, params: TubeParams) -> ChainRho:
    """Two-term values through the benchmark -> damped -> full chain.

    The benchmark step uses ``tau = q + c / (4 q)``, the expansion of
    :func:`benchmark_tau`. The damped step adds ``i / (2 kappa tau)`` and the
    full step adds ``(beta^2 eta^2 / 2 + 2 i beta eta) / (4 rho_tilde)``.
    """
    _need_kappa(params)
    q = _q(n)
    be = params.beta * params.eta
    tau = q + params.tension / (4 * q)
    rho_t = tau + 1j / (2 * params.kappa * tau)
    rho = rho_t + (0.5 * be * be + 2j * be) / (4 * rho_t)
    return ChainRho(n, float(tau), complex(rho_t), complex(rho))


def chain_tau_variant(n, params: TubeParams) -> float:
    """Benchmark step with coefficient c/q instead of c/(4q), kept for comparison."""
    q = _q(n)
    return q + params.tension / q


def mode_gap(n, params: TubeParams) -> float:
    """Asymptotic distance in Im(lambda) between modes n and n+1."""
    return asymptotic_imag(n + 1, params) - asymptotic_imag(n, params)
