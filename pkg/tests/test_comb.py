import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spopo.comb import (
    FrequencyGrid,
    PhaseMatching,
    PumpSpectrum,
    amplitude_sigma,
    build_coupling,
    diagonalize,
    fwhm_nm_to_hz,
    hermite_gauss_reference,
    parity,
    pump_from_fundamental,
    rms_width,
    wavelength_to_frequency,
)
from spopo.errors import ConfigurationError

NU0 = wavelength_to_frequency(795.0)
FSR = 1.8e11


def grid(n=201):
    return FrequencyGrid.from_mode_count(NU0, FSR, n)


class TestGrid:
    def test_frequencies_exact(self):
        g = grid(11)
        assert np.array_equal(g.frequencies, NU0 + g.indices * FSR)
        assert g.size == 11 and g.indices[0] == -5

    @pytest.mark.parametrize("n", [2, 4, 1])
    def test_even_or_tiny_rejected(self, n):
        with pytest.raises(ConfigurationError):
            FrequencyGrid.from_mode_count(NU0, FSR, n)

    def test_bad_spacing(self):
        with pytest.raises(ConfigurationError):
            FrequencyGrid(NU0, 0.0, 3)


class TestSpectra:
    def test_single_line_pump(self):
        g = grid(5)
        p = PumpSpectrum("single-line", 2 * NU0)
        offs = (g.indices[:, None] + g.indices[None, :]) * FSR
        a = p.amplitude_at_offset(offs)
        assert np.array_equal(a, (offs == 0).astype(float))

    def test_gaussian_pump_normalised(self):
        p = pump_from_fundamental(795.0, 6.0)
        offs = np.linspace(-5e13, 5e13, 1001)
        a = p.amplitude_at_offset(offs)
        assert a.max() == pytest.approx(1.0)
        assert np.all(a >= 0)

    def test_pump_width_from_fundamental(self):
        p = pump_from_fundamental(795.0, 6.0)
        assert p.center == pytest.approx(2 * NU0)
        assert p.fwhm == pytest.approx(math.sqrt(2) * fwhm_nm_to_hz(6.0, 795.0))
        # 6 nm at 795 nm is close to 2.85 THz
        assert fwhm_nm_to_hz(6.0, 795.0) == pytest.approx(2.846e12, rel=1e-3)

    def test_amplitude_sigma(self):
        fwhm = 1.0
        s = amplitude_sigma(fwhm)
        # intensity exp(-x^2/s^2) falls to 1/2 at fwhm/2
        assert math.exp(-((fwhm / 2) ** 2) / s**2) == pytest.approx(0.5)

    @pytest.mark.parametrize("shape", ["flat", "gaussian", "sinc"])
    def test_phase_matching_symmetric_bounded(self, shape):
        pm = PhaseMatching(shape, None if shape == "flat" else 3e12)
        f = np.array(grid(41).frequencies)
        v = pm.value(f[:, None], f[None, :])
        assert np.array_equal(v, v.T)
        assert np.all(np.abs(v) <= 1)
        if shape == "flat":
            assert np.all(v == 1)

    def test_unknown_shapes(self):
        with pytest.raises(ConfigurationError):
            PumpSpectrum("square", 2 * NU0, 1e12)
        with pytest.raises(ConfigurationError):
            PhaseMatching("lorentz", 1e12)


class TestCoupling:
    def test_single_line_exchange_matrix(self):
        g = grid(5)
        L = build_coupling(g, PumpSpectrum("single-line", 2 * NU0), PhaseMatching()).entries
        assert np.array_equal(L, np.fliplr(np.eye(5)))

    def test_gaussian_pump_flat_pm(self):
        g = grid(21)
        p = PumpSpectrum("gaussian", 2 * NU0, 2e12)
        L = build_coupling(g, p, PhaseMatching()).entries
        s = amplitude_sigma(2e12)
        m, n = np.meshgrid(g.indices, g.indices, indexing="ij")
        assert np.allclose(L, np.exp(-(((m + n) * FSR) ** 2) / (2 * s**2)), rtol=0, atol=1e-15)
        assert L[10, 10] == 1.0

    def test_exactly_symmetric(self, ref_sim):
        L = ref_sim.coupling.entries
        assert np.abs(L - L.T).max() == 0.0

    def test_offset_single_line(self):
        # pump one line above 2 nu0 pairs m with 1 - m
        g = grid(5)
        L = build_coupling(g, PumpSpectrum("single-line", 2 * NU0 + FSR), PhaseMatching()).entries
        m, n = np.meshgrid(g.indices, g.indices, indexing="ij")
        assert np.array_equal(L, (m + n == 1).astype(float))

    def test_mismatched_pump_centre(self):
        with pytest.raises(ConfigurationError, match="whole number of line spacings"):
            build_coupling(grid(5), PumpSpectrum("single-line", 2 * NU0 + 1e9), PhaseMatching())


class TestDiagonalize:
    def test_exchange_eigenpairs(self):
        g = grid(5)
        modes = diagonalize(build_coupling(g, PumpSpectrum("single-line", 2 * NU0), PhaseMatching()))
        assert np.allclose(np.abs(modes.eigenvalues), 1)
        assert sorted(np.sign(modes.eigenvalues)) == [-1, -1, 1, 1, 1]
        for k in range(5):
            v = modes.vectors[:, k]
            support = np.flatnonzero(np.abs(v) > 1e-12)
            # every eigenvector lives on one {+p, -p} pair
            assert set(g.indices[support]) in ({0}, {-1, 1}, {-2, 2})
            if len(support) == 2:
                assert np.allclose(np.abs(v[support]), 1 / math.sqrt(2))
                expect = modes.eigenvalues[k]
                assert np.sign(v[support[0]] * v[support[1]]) == np.sign(expect)

    def test_single_line_pm_pairs(self, single_line_sim):
        w = single_line_sim.modes.eigenvalues
        pos = np.sort(w[w > 0])
        neg = np.sort(-w[w < 0])
        # +/- lambda pairs; the centre line has no partner and adds f(0) = 1
        assert len(pos) == len(neg) + 1 == 101
        assert pos[-1] == pytest.approx(1.0)
        assert np.allclose(pos[:-1], neg, rtol=1e-9, atol=1e-14)

    def test_orthonormal_and_reconstructs(self, ref_sim):
        m = ref_sim.modes
        v = m.vectors
        assert np.abs(v.T @ v - np.eye(len(m))).max() < 1e-10
        L = ref_sim.coupling.entries
        assert np.linalg.norm(L - m.reconstruct()) / np.linalg.norm(L) < 1e-10

    def test_sorted_and_sign_fixed(self, ref_sim):
        w = np.abs(ref_sim.modes.eigenvalues)
        assert np.all(np.diff(w) <= 1e-12 * w[0])
        for col in ref_sim.modes.vectors[:, :20].T:
            mag = np.abs(col)
            # ties (odd modes) resolve to the first entry of maximal magnitude
            lead = np.flatnonzero(mag >= mag.max() - 1e-12)[0]
            assert col[lead] > 0

    def test_deterministic(self, ref_sim):
        again = diagonalize(ref_sim.coupling)
        assert np.array_equal(again.vectors, ref_sim.modes.vectors)

    def test_leading_signs_alternate(self, ref_sim):
        w = ref_sim.modes.eigenvalues[:8]
        assert np.array_equal(np.sign(w), [(-1) ** k for k in range(8)])

    def test_parities_alternate(self, ref_sim):
        par = [parity(ref_sim.modes.vectors[:, k]) for k in range(8)]
        assert par == [(-1) ** k for k in range(8)]

    def test_leading_mode_gaussian(self, ref_sim):
        g = ref_sim.modes.grid
        v0 = ref_sim.modes.vectors[:, 0]
        ref = hermite_gauss_reference(0, rms_width(v0, g), g)
        assert abs(ref @ v0) > 0.99

    def test_mode_width_closed_form(self, ref_cfg, ref_sim):
        # a Gaussian sum kernel of width a times a Gaussian difference kernel
        # of width b has Gaussian ground state with intensity RMS sqrt(ab)/2
        p = pump_from_fundamental(795.0, ref_cfg.pump.fwhm_nm)
        a = amplitude_sigma(p.fwhm)
        b = ref_cfg.phase_matching.width
        got = rms_width(ref_sim.modes.vectors[:, 0], ref_sim.modes.grid)
        assert got == pytest.approx(math.sqrt(a * b) / 2, rel=1e-3)

    def test_converged_in_grid_resolution(self, ref_cfg, ref_sim):
        # halve the line spacing: the leading modes sampled on the coarse lines agree
        from spopo.simulate import build_pump

        fine = FrequencyGrid.from_mode_count(NU0, FSR / 2, 401)
        pm = PhaseMatching(ref_cfg.phase_matching.shape, ref_cfg.phase_matching.width)
        modes = diagonalize(build_coupling(fine, build_pump(ref_cfg, fine), pm))
        for k in range(4):
            coarse = modes.vectors[::2, k]
            coarse = coarse / np.linalg.norm(coarse)
            assert abs(coarse @ ref_sim.modes.vectors[:, k]) > 0.999

    def test_supermode_csv_and_json(self, ref_sim, tmp_path):
        ref_sim.modes.to_csv(tmp_path / "m.csv", k=3)
        ref_sim.modes.eigenvalues_json(tmp_path / "e.json")
        rows = list(csv.reader(open(tmp_path / "m.csv")))
        assert rows[0] == ["frequency_hz", "mode_0", "mode_1", "mode_2"]
        assert len(rows) == 202
        assert float(rows[101][0]) == pytest.approx(NU0)
        assert np.allclose([float(r[1]) for r in rows[1:]], ref_sim.modes.vectors[:, 0])
        assert json.load(open(tmp_path / "e.json"))[0] == pytest.approx(ref_sim.modes.eigenvalues[0])


class TestHermiteGauss:
    def test_order_zero(self):
        g = grid(101)
        v = hermite_gauss_reference(0, 2e12, g)
        assert np.all(v > 0)
        assert parity(v) == 1
        assert np.linalg.norm(v) == pytest.approx(1)

    def test_order_one_odd(self):
        g = grid(101)
        v = hermite_gauss_reference(1, 2e12, g)
        assert parity(v) == -1
        assert v[50] == 0.0

    @given(st.integers(0, 6), st.floats(1e12, 2.5e12))
    def test_width_law(self, k, width):
        g = grid(401)
        w0 = rms_width(hermite_gauss_reference(0, width, g), g)
        wk = rms_width(hermite_gauss_reference(k, width, g), g)
        assert w0 == pytest.approx(width, rel=1e-3)
        assert wk / w0 == pytest.approx(math.sqrt(2 * k + 1), rel=1e-2)

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            hermite_gauss_reference(-1, 1e12, grid(5))
        with pytest.raises(ConfigurationError):
            hermite_gauss_reference(0, 0.0, grid(5))
