"""Eigenvalue location, certification and ordering."""
import numpy as np
import pytest

from oracles.collocation import oracle_spectrum
from oracles.shooting import shooting_root
from pipeflow.asymptotics import asymptotic_rho
from pipeflow.errors import ConvergedToWrongBasin, NoConvergence
from pipeflow.model import validate_params
from pipeflow.spectrum import (TOL_CONJ, Rectangle, count_zeros, find_spectrum, refine_root,
                               spectral_abscissa, winding_number)


class TestRectangle:
    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            Rectangle(0.0, 0.0, 0.0, 1.0)

    def test_split_covers_parent(self):
        r = Rectangle(-2.0, 0.0, 0.0, 10.0)
        a, b = r.split()
        assert a.im0 == r.im0 and b.im1 == r.im1 and a.im1 == b.im0
        assert a.re0 == b.re0 == r.re0

    def test_dilate_and_mirror(self):
        r = Rectangle(-1.0, 1.0, 2.0, 4.0)
        d = r.dilate(0.1)
        assert d.width == pytest.approx(2.2) and d.height == pytest.approx(2.2)
        m = r.mirrored()
        assert (m.im0, m.im1) == (-4.0, -2.0)
        assert r.centroid == complex(0.0, 3.0)
        assert r.contains(complex(0.0, 3.0)) and not r.contains(complex(0.0, 5.0))
        assert len(r.corners()) == 4


class TestRefineRoot:
    def test_high_mode_seed(self, default_params):
        """The two-term asymptote is a good enough seed for mode 20."""
        seed = asymptotic_rho(20, default_params).lam
        ev = refine_root(seed, default_params, seed_mode=20)
        assert ev.iterations <= 6
        assert abs(ev.lam - seed) < abs(seed) / 20
        ref = oracle_spectrum(10.0, 1.0, 1.0, 0.5, im_max=5000.0)
        assert np.min(np.abs(ref - ev.lam)) < 1e-8 * abs(ev.lam)

    def test_conjugate_seed(self, default_spectrum, default_params):
        lam = default_spectrum.mode(3).lam
        ev = refine_root(lam.conjugate() + 0.01, default_params)
        assert abs(ev.lam - lam.conjugate()) < 1e-8 * abs(lam)

    def test_origin_seed_never_returns_zero(self, default_params):
        try:
            ev = refine_root(0.0, default_params)
        except NoConvergence:
            return
        assert abs(ev.lam) > 1e-3

    def test_wrong_basin(self, default_params):
        """A mode-20 seed pushed most of the way to mode 21 is rejected."""
        a = asymptotic_rho(20, default_params).lam
        b = asymptotic_rho(21, default_params).lam
        with pytest.raises(ConvergedToWrongBasin):
            refine_root(a + 0.6 * (b - a), default_params, seed_mode=20)


class TestCounting:
    def test_empty_box(self, default_params):
        assert count_zeros(Rectangle(-1001.0, -999.0, -1.0, 1.0), default_params) == 0

    def test_single_root_box(self, default_spectrum, default_params):
        lam = default_spectrum.mode(2).lam
        box = Rectangle(lam.real - 0.5, lam.real + 0.5, lam.imag - 1.0, lam.imag + 1.0)
        assert count_zeros(box, default_params) == 1
        assert winding_number(box, default_params) == 1

    def test_real_root_on_edge(self, default_params):
        """A box whose lower edge runs through the real eigenvalue is dilated, not miscounted."""
        assert count_zeros(Rectangle(-50.0, 0.0, 0.0, 30.0), default_params) == 3

    def test_long_edge_no_aliasing(self, default_params):
        """Long edges through fast phase rotation still count every turn."""
        top = 806.446
        assert count_zeros(Rectangle(-50.0, 0.0, -4.03, top), default_params) == \
            count_zeros(Rectangle(-50.0, 0.0, -1.0, top), default_params)

    def test_large_box_matches_found_roots(self, default_spectrum, default_params):
        """Completeness over a box reaching well past mode 8."""
        top_mode = 8
        lam_top = default_spectrum.mode(top_mode).lam
        gap = default_spectrum.mode(top_mode + 1).lam.imag - lam_top.imag
        box = Rectangle(-50.0, 0.0, 0.0, lam_top.imag + gap / 2)
        inside = [e for e in default_spectrum if e.lam.imag >= 0 and box.contains(e.lam)]
        assert count_zeros(box, default_params) == len(inside)


class TestDefaultSpectrum:
    """Default parameters gamma=10, eta=1, kappa=1, beta=0.5 with 40 modes."""

    def test_strict_left_half_plane(self, default_spectrum):
        assert max(e.lam.real for e in default_spectrum) < -1e-6

    def test_nonzero(self, default_spectrum):
        assert min(abs(e.lam) for e in default_spectrum) > 1e-3

    def test_conjugate_closure(self, default_spectrum):
        for e in default_spectrum.upper():
            partner = default_spectrum.conjugate_of(e)
            assert abs(partner.lam - e.lam.conjugate()) <= TOL_CONJ * (1 + abs(e.lam))

    def test_ordering(self, default_spectrum):
        im = np.array([e.lam.imag for e in default_spectrum])
        assert np.all(np.diff(im) >= 0)

    def test_mode_count(self, default_spectrum):
        assert len(default_spectrum.upper()) == 41
        assert len(default_spectrum) == 2 * 41 + len(default_spectrum.real())

    def test_certificates_cover_everything(self, default_spectrum):
        total = sum(c.winding for c in default_spectrum.certificates)
        assert total == len(default_spectrum)
        for e in default_spectrum:
            assert e.certified
            assert any(c.region.contains(e.lam) for c in default_spectrum.certificates)

    def test_real_eigenvalue_flagged(self, default_spectrum):
        reals = default_spectrum.real()
        assert len(reals) == 1
        assert reals[0].lam.real == pytest.approx(-2.98159252, abs=1e-7)

    def test_low_modes_against_collocation(self, default_spectrum):
        ref = oracle_spectrum(10.0, 1.0, 1.0, 0.5, im_max=2000.0)
        ours = np.array([e.lam for e in default_spectrum if abs(e.lam.imag) <= 2000.0])
        assert len(ref) == len(ours)
        for z in ref:
            assert np.min(np.abs(ours - z)) < 1e-6 * max(1.0, abs(z))

    def test_low_modes_against_shooting(self, default_spectrum):
        for n in range(4):
            lam = default_spectrum.mode(n).lam
            ref = shooting_root(lam + 0.05, 10.0, 1.0, 1.0, 0.5)
            assert abs(lam - ref) < 1e-9 * abs(ref)

    def test_residuals_small(self, default_spectrum):
        assert max(e.residual for e in default_spectrum) < 1e-6

    def test_high_mode_real_part(self, default_spectrum):
        """Real parts approach -(beta eta + 1/kappa) = -1.5."""
        assert abs(default_spectrum.mode(30).lam.real + 1.5) < 1.0 / 30

    def test_asymptotic_agreement(self, default_spectrum, default_params):
        err = {n: n**2 * abs(default_spectrum.mode(n).rho - asymptotic_rho(n, default_params).rho)
               for n in range(10, 41)}
        assert max(err.values()) <= 2 * err[10]

    def test_simple_at_height(self, default_spectrum):
        for e in default_spectrum.upper():
            if e.mode >= 10:
                assert not e.possibly_multiple

    def test_abscissa(self, default_spectrum):
        assert spectral_abscissa(default_spectrum) == pytest.approx(-0.71306554, abs=1e-7)
        assert default_spectrum.abscissa == default_spectrum.mode(0).lam.real
        assert default_spectrum.abscissa > -1.5

    def test_rho_branch(self, default_spectrum):
        e = default_spectrum.mode(5)
        assert 1j * e.rho**2 == pytest.approx(e.lam, rel=1e-12)


class TestConservativeSpectrum:
    def test_imaginary_axis(self, conservative_spectrum):
        assert max(abs(e.lam.real) for e in conservative_spectrum) < 1e-8

    def test_abscissa_zero(self, conservative_spectrum):
        assert abs(conservative_spectrum.abscissa) < 1e-8

    def test_collocation(self, conservative_spectrum):
        ref = oracle_spectrum(10.0, 0.0, 0.0, 0.5, im_max=1000.0)
        ours = conservative_spectrum.lambdas()
        for z in ref:
            assert np.min(np.abs(ours - z)) < 1e-6 * max(1.0, abs(z))


class TestFindSpectrumGuards:
    def test_n_max_limit(self, default_params):
        with pytest.raises(ValueError):
            find_spectrum(default_params, 61)

    def test_small_request(self):
        spec = find_spectrum(validate_params(10.0, 1.0, 2.0, 0.3), 6)
        assert len(spec.upper()) >= 7
        assert spec.abscissa < 0
        with pytest.raises(ValueError):
            spectral_abscissa(type(spec)(spec.params, ()))
