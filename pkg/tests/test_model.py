"""Parameter validation, the energy functional and the power-balance identity."""
import math

import numpy as np
import pytest

from pipeflow.errors import BetaOutOfRange, GridTooCoarse, NegativeParameter, TensionTooLow
from pipeflow.model import (StateVector, energy, energy_norm, inner, power_balance,
                            power_balance_residual, state_from_csv, state_to_csv,
                            uniform_grid, validate_params, zero_state)
from pipeflow.modes import build_mode, energy_vector


class TestValidateParams:
    def test_default_set_is_valid(self):
        p = validate_params(10, 1, 1, 0.5)
        assert p.tension == 9.0
        assert p.coriolis == 1.0

    def test_low_tension_rejected(self):
        with pytest.raises(TensionTooLow):
            validate_params(1, 1, 1, 0.5)

    @pytest.mark.parametrize("beta", [0.0, 1.0, -0.2, 1.5])
    def test_beta_open_interval(self, beta):
        with pytest.raises(BetaOutOfRange):
            validate_params(10, 1, 1, beta)

    @pytest.mark.parametrize("eta,kappa", [(-0.1, 1.0), (1.0, -1.0)])
    def test_negative_rejected(self, eta, kappa):
        with pytest.raises(NegativeParameter):
            validate_params(10, eta, kappa, 0.5)

    def test_non_finite_rejected(self):
        with pytest.raises(NegativeParameter):
            validate_params(float("nan"), 1, 1, 0.5)

    @pytest.mark.parametrize("gamma,eta,kappa,beta", [
        (10, 0, 0, 0.5), (1.01, 1, 0, 0.01), (2, 1.4, 5, 0.99), (1e-3, 0, 3, 0.5)])
    def test_admissible_corners_accepted(self, gamma, eta, kappa, beta):
        validate_params(gamma, eta, kappa, beta)


class TestStateVector:
    def test_nonzero_left_value_rejected(self):
        s = uniform_grid(9)
        with pytest.raises(ValueError):
            StateVector(s + 1.0, s, s)

    def test_coarse_grid_rejected(self):
        with pytest.raises(GridTooCoarse):
            uniform_grid(4)

    def test_arrays_are_frozen(self):
        x = zero_state(9)
        with pytest.raises(ValueError):
            x.w[1] = 1.0

    def test_csv_round_trip(self):
        s = uniform_grid(17)
        x = StateVector(np.sin(s) * (1 + 2j), np.cos(s), s)
        y = state_from_csv(state_to_csv(x))
        assert np.array_equal(x.w, y.w) and np.array_equal(x.v, y.v)
        real = StateVector(np.sin(s), np.cos(s), s)
        assert state_from_csv(state_to_csv(real)).is_real


class TestEnergy:
    def test_zero_state(self):
        assert energy(zero_state(), validate_params(10, 1, 1, 0.5)) == 0.0

    def test_sine_profile(self):
        """w = sin(pi s), v = 0, tension 1: (pi^4 + pi^2) / 4."""
        s = uniform_grid()
        x = StateVector(np.sin(math.pi * s), np.zeros_like(s), s)
        e = energy(x, validate_params(1.0, 0.0, 1.0, 0.5))
        assert e == pytest.approx((math.pi**4 + math.pi**2) / 4, rel=1e-7)
        assert e == pytest.approx(26.8197, abs=1e-4)

    def test_unit_velocity(self):
        s = uniform_grid()
        x = StateVector(np.zeros_like(s), np.ones_like(s), s)
        assert energy(x, validate_params(10, 1, 1, 0.5)) == pytest.approx(0.5, rel=1e-13)

    def test_quadratic_scaling(self):
        s = uniform_grid()
        p = validate_params(10, 1, 1, 0.5)
        x = StateVector(s**2 * np.sin(3 * s), np.cos(2 * s) - 1, s)
        assert energy(x.scaled(-2.7), p) == pytest.approx(2.7**2 * energy(x, p), rel=1e-12)

    def test_norm_and_inner_agree(self):
        s = uniform_grid()
        p = validate_params(10, 1, 1, 0.5)
        x = StateVector(s * np.exp(s), np.sin(s), s)
        assert energy_norm(x, p) ** 2 == pytest.approx(2 * energy(x, p), rel=1e-12)
        assert inner(x, x, p).imag == pytest.approx(0.0, abs=1e-12)

    def test_coarse_grid(self):
        p = validate_params(10, 1, 1, 0.5)
        s = np.linspace(0, 1, 4)
        x = StateVector.__new__(StateVector)
        object.__setattr__(x, "w", np.zeros(4))
        object.__setattr__(x, "v", np.zeros(4))
        object.__setattr__(x, "s", s)
        with pytest.raises(GridTooCoarse):
            energy(x, p)


class TestPowerBalance:
    def test_zero_state(self):
        x = zero_state()
        assert power_balance_residual(x, x, validate_params(10, 1, 1, 0.5)) == 0.0

    @pytest.mark.parametrize("n", [0, 3, 8])
    def test_eigenmode_pair(self, default_params, default_spectrum, n):
        """(x, lambda x) for an eigenvector satisfies the identity."""
        x = energy_vector(build_mode(default_spectrum.mode(n), default_params), default_params)
        state = x.as_state()
        pb = power_balance(state, state.scaled(x.lam), default_params)
        assert pb.relative_residual < 1e-6
        assert pb.dissipation > 0

    def test_conservative_case(self, conservative_params, conservative_spectrum):
        x = energy_vector(build_mode(conservative_spectrum.mode(2), conservative_params),
                          conservative_params)
        state = x.as_state()
        pb = power_balance(state, state.scaled(x.lam), conservative_params)
        assert pb.dissipation == 0.0
        assert pb.relative_residual < 1e-6
