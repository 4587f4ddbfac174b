"""Fundamental system, compound-matrix determinant and the Runge-Kutta kernel."""
import numpy as np
import pytest
from scipy.linalg import expm

from oracles.shooting import shooting_determinant
from pipeflow import _rk
from pipeflow.model import validate_params
from pipeflow.ode_core import (characteristic_determinant, characteristic_roots, companion,
                               compound_matrix, delta_segment, determinant_derivative,
                               evaluate_determinant, fundamental_system, growth_shift,
                               wronskian_profile)

P = validate_params(10.0, 1.0, 1.0, 0.5)


class TestCompanion:
    def test_roots_are_eigenvalues(self):
        lam = 0.3 + 4.0j
        ev = np.sort_complex(np.linalg.eigvals(companion(lam, P)))
        np.testing.assert_allclose(ev, np.sort_complex(characteristic_roots(lam, P)), atol=1e-10)

    def test_growth_shift_nonnegative(self):
        assert growth_shift(-3.0 + 0j, validate_params(10, 0, 0, 0.5)) >= 0.0

    def test_compound_of_product(self):
        """The exterior square is multiplicative: C(AB) = C(A) C(B) for exponentials."""
        rng = np.random.default_rng(3)
        A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        # d/dt of wedge(Y) with Y' = A Y is compound(A) wedge(Y)
        Y = expm(0.1 * A)
        wedge = np.array([Y[i, 0] * Y[j, 1] - Y[j, 0] * Y[i, 1]
                          for i, j in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]])
        e0 = np.zeros(6, dtype=complex)
        e0[0] = 1.0
        np.testing.assert_allclose(expm(0.1 * compound_matrix(A)) @ e0, wedge, atol=1e-12)


class TestIntegrator:
    def test_matrix_exponential(self):
        M = companion(1.0 + 2.0j, P)
        Y, mesh, _, runmax, status = _rk.integrate(M, np.eye(4, dtype=complex), (1.0,), 1e-12, 1e-14)
        assert status == _rk.STATUS_OK
        np.testing.assert_allclose(Y, expm(M), rtol=1e-9)

    def test_replay_reproduces(self):
        M = companion(0.5 + 1.0j, P)
        Y, mesh, _, _, _ = _rk.integrate(M, np.eye(4, dtype=complex), (1.0,), 1e-11, 1e-13)
        Y2, _ = _rk.replay(M, np.eye(4, dtype=complex), mesh.copy())
        np.testing.assert_allclose(Y2, Y, rtol=1e-13)


class TestFundamentalSystem:
    def test_wronskian_is_constant(self):
        """The ODE has no third-derivative term, so the Wronskian stays 1."""
        w = wronskian_profile(-0.7 + 5.3j, P, np.linspace(0.1, 1.0, 10))
        np.testing.assert_allclose(w, 1.0, rtol=1e-8)

    def test_matches_matrix_exponential(self):
        lam = -1.0 + 3.0j
        fs = fundamental_system(lam, P)
        np.testing.assert_allclose(fs.matrix(1, scaled=False), expm(companion(lam, P)), rtol=1e-9)


class TestDeterminant:
    @pytest.mark.parametrize("lam", [1.0 + 2.0j, -0.5 + 7.0j, -2.0 + 0j])
    def test_agrees_with_direct_shooting(self, lam):
        ours = characteristic_determinant(lam, P)
        ref = shooting_determinant(lam, 10.0, 1.0, 1.0, 0.5)
        assert abs(ours - ref) < 1e-8 * max(1.0, abs(ref))

    def test_vanishes_at_eigenvalue(self, default_spectrum):
        ev = default_spectrum.mode(3)
        d = evaluate_determinant(ev.lam, P)
        assert d.residual < 1e-9

    def test_derivative_matches_difference(self):
        lam, h = 0.2 + 6.0j, 1e-5
        fd = (characteristic_determinant(lam + h, P) - characteristic_determinant(lam - h, P)) / (2 * h)
        assert abs(determinant_derivative(lam, P) - fd) < 1e-5 * abs(fd)

    def test_scaled_form_survives_high_modes(self):
        """At mode 40 the raw determinant is astronomically large; the mantissa stays finite."""
        d = evaluate_determinant(-1.5 + 16500j, P)
        assert np.isfinite(d.mantissa) and d.log10_scale > 30

    def test_segment_rows(self):
        rows = delta_segment(P, -1 + 5j, -0.5 + 5.5j, 3)
        assert len(rows) == 3 and len(rows[0]) == 5
        assert rows[1][0] == pytest.approx(-0.75)
