import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import band_limited
from kinfp.grid import (PhaseField, PhaseGrid, dealias_mask, inner, lp_norm, mixed_lp_norm,
                        shear, to_spectral, total_mass, upsampled_max)
from kinfp.io import field_slice_csv, read_field, write_field

GRIDS = [PhaseGrid.position(1, 1.0, 64), PhaseGrid.position(2, 3.0, 16),
         PhaseGrid.phase(1, 2.0, 16, 4.0, 32), PhaseGrid.phase(2, 2.0, 8, 4.0, 8)]


class TestPhaseGrid:
    @pytest.mark.parametrize("n", [6, 12, 4, 100])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ValueError):
            PhaseGrid.position(1, 1.0, n)

    def test_rejects_bad_box(self):
        with pytest.raises(ValueError):
            PhaseGrid.phase(1, 1.0, 8, 0.0, 8)

    def test_rejects_bad_dimension(self):
        with pytest.raises(ValueError):
            PhaseGrid.position(3, 1.0, 8)

    def test_frequency_lattice(self):
        g = PhaseGrid.position(1, 3.0, 8)
        k = np.sort(g.freq(0).ravel() * 3.0 / (2 * np.pi))
        assert np.allclose(k, np.arange(-4, 4))

    def test_shapes(self):
        g = PhaseGrid.phase(2, 1.0, 8, 2.0, 16)
        assert g.shape == (8, 8, 16, 16)
        assert g.x_axes == (0, 1) and g.v_axes == (2, 3)
        assert g.cell_volume == pytest.approx((1 / 8) ** 2 * (2 / 16) ** 2)


class TestTransforms:
    def test_constant_has_only_zero_mode(self):
        g = PhaseGrid.phase(1, 2.0, 16, 3.0, 16)
        f = PhaseField(g, np.full(g.shape, 2.5))
        s = f.spectrum
        assert s.flat[0] == pytest.approx(2.5)
        assert np.abs(s).sum() - abs(s.flat[0]) < 1e-14

    def test_pure_tone_two_modes(self):
        g = PhaseGrid.position(1, 3.0, 32)
        f = PhaseField.from_function(g, lambda x: np.cos(2 * np.pi * x / 3.0))
        nz = np.flatnonzero(np.abs(f.spectrum) > 1e-12)
        assert sorted(nz.tolist()) == [1, 31]

    @pytest.mark.parametrize("g", GRIDS)
    def test_round_trip(self, g):
        rng = np.random.default_rng(1)
        v = rng.standard_normal(g.shape)
        f = PhaseField(g, v)
        back = PhaseField(g, spectrum=f.spectrum).values
        assert np.abs(back - v).max() / np.abs(v).max() <= 1e-12

    @pytest.mark.parametrize("g", GRIDS)
    def test_conjugate_symmetry(self, g):
        v = np.random.default_rng(2).standard_normal(g.shape)
        s = PhaseField(g, v).spectrum
        flipped = np.conj(np.roll(np.flip(s), 1, axis=tuple(range(g.ndim))))
        assert np.allclose(s, flipped, atol=1e-14)

    def test_non_finite_rejected(self):
        g = PhaseGrid.position(1, 1.0, 8)
        v = np.zeros(8)
        v[3] = np.nan
        with pytest.raises(ValueError):
            PhaseField(g, v)
        f = PhaseField(g, v, check=False)
        with pytest.raises(ValueError):
            to_spectral(f)

    def test_to_spectral_idempotent(self):
        g = PhaseGrid.position(1, 1.0, 8)
        f = PhaseField(g, np.arange(8.0))
        assert to_spectral(to_spectral(f)) is f
        assert f.has_spectrum

    def test_immutable(self):
        f = PhaseField(PhaseGrid.position(1, 1.0, 8), np.zeros(8))
        with pytest.raises(ValueError):
            f.values[0] = 1.0


class TestMixedNorm:
    def test_unit_constant(self):
        g = PhaseGrid.phase(1, 1.0, 16, 1.0, 16)
        assert mixed_lp_norm(PhaseField(g, np.ones(g.shape)), (2, 3)) == pytest.approx(1.0)

    @pytest.mark.parametrize("p", [(1, 2), (2, 3), (math.inf, 1), (3, math.inf)])
    def test_separable_factorises(self, p):
        g = PhaseGrid.phase(1, 2.0, 32, 4.0, 32)
        gx = np.exp(-g.coord(0) ** 2)
        hv = 1 + np.cos(g.coord(1))
        f = PhaseField(g, gx * hv)
        one_x = PhaseField(g.position_grid("x"), gx.ravel())
        one_v = PhaseField(g.position_grid("v"), hv.ravel())
        assert mixed_lp_norm(f, p) == pytest.approx(lp_norm(one_x, p[0]) * lp_norm(one_v, p[1]),
                                                    rel=1e-12)

    @pytest.mark.parametrize("p", [1, 2, 3.5, math.inf])
    def test_equal_exponents_match_plain_norm(self, p):
        g = PhaseGrid.phase(1, 2.0, 16, 4.0, 32)
        f = PhaseField(g, np.random.default_rng(3).standard_normal(g.shape))
        assert mixed_lp_norm(f, (p, p)) == pytest.approx(lp_norm(f, p), rel=1e-12)

    def test_order_is_x_first(self):
        g = PhaseGrid.phase(1, 1.0, 8, 1.0, 8)
        vals = np.zeros(g.shape)
        vals[0, :] = 1.0
        f = PhaseField(g, vals)
        # x-first: ||f(., v)||_1 = 1/8 for every v, then sup over v
        assert mixed_lp_norm(f, (1, math.inf)) == pytest.approx(1 / 8)
        assert mixed_lp_norm(f, (math.inf, 1)) == pytest.approx(1.0)

    def test_rejects_small_exponent(self):
        g = PhaseGrid.phase(1, 1.0, 8, 1.0, 8)
        with pytest.raises(ValueError):
            mixed_lp_norm(PhaseField.zeros(g), (0.5, 1))


class TestShear:
    def test_zero_is_identity(self, kgrid):
        f = band_limited(kgrid)
        assert shear(f, 0.0) is f

    def test_moves_slices(self):
        g = PhaseGrid.phase(1, 2 * np.pi, 32, 8.0, 32)
        f = PhaseField.from_function(g, lambda x, v: np.sin(x) + 0 * v)
        t = 0.37
        out = shear(f, t)
        exact = np.sin(g.coord(0) - t * g.coord(1))
        assert np.abs(out.values - exact).max() < 1e-12

    @given(s=st.floats(-3, 3), t=st.floats(-3, 3), seed=st.integers(0, 100))
    def test_group_law(self, s, t, seed):
        g = PhaseGrid.phase(1, 2 * np.pi, 32, 8.0, 32)
        f = band_limited(g, seed)
        lhs = shear(shear(f, s), t).values
        rhs = shear(f, s + t).values
        assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(f.values).max() * 10

    @given(t=st.floats(-5, 5), seed=st.integers(0, 100))
    def test_l2_isometry(self, t, seed):
        g = PhaseGrid.phase(1, 2 * np.pi, 32, 8.0, 32)
        f = band_limited(g, seed)
        assert mixed_lp_norm(shear(f, t), (2, 2)) == pytest.approx(mixed_lp_norm(f, (2, 2)),
                                                                   rel=1e-12)

    def test_requires_kinetic(self):
        with pytest.raises(ValueError):
            shear(PhaseField.zeros(PhaseGrid.position(1, 1.0, 8)), 1.0)


class TestMass:
    def test_unit_constant(self):
        g = PhaseGrid.position(2, 1.0, 8)
        assert total_mass(PhaseField(g, np.ones(g.shape))) == pytest.approx(1.0)

    def test_odd_function(self):
        # wide box: the unpaired node at -box/2 carries e^-64 weight
        g = PhaseGrid.position(1, 16.0, 64)
        assert abs(total_mass(PhaseField.from_function(g, lambda x: x * np.exp(-x * x)))) < 1e-14

    def test_gaussian(self):
        g = PhaseGrid.phase(1, 20.0, 64, 20.0, 64)
        f = PhaseField.from_function(g, lambda x, v: 3.0 * np.exp(-(x * x + v * v) / 2))
        assert total_mass(f) == pytest.approx(3.0 * 2 * np.pi, rel=1e-8)

    def test_zero_mode(self):
        g = PhaseGrid.phase(1, 2.0, 16, 3.0, 16)
        f = band_limited(g, 4) + 1.0
        assert total_mass(f) == pytest.approx(np.real(f.spectrum.flat[0]) * g.volume, rel=1e-12)

    def test_inner(self):
        g = PhaseGrid.position(1, 2 * np.pi, 32)
        f = PhaseField.from_function(g, np.sin)
        assert inner(f, f) == pytest.approx(np.pi, rel=1e-12)


class TestHelpers:
    def test_upsampled_max_not_below_lattice_max(self, kgrid):
        f = band_limited(kgrid, 5)
        assert upsampled_max(f) >= f.values.max() - 1e-12

    def test_dealias_mask(self):
        g = PhaseGrid.position(1, 1.0, 16)
        m = dealias_mask(g)
        k = np.abs(np.fft.fftfreq(16) * 16)
        assert np.array_equal(m, k < 16 / 3)


class TestFieldIO:
    @pytest.mark.parametrize("g", GRIDS)
    def test_round_trip(self, tmp_path, g):
        f = PhaseField(g, np.random.default_rng(6).standard_normal(g.shape))
        write_field(tmp_path / "f.knfp", f)
        back = read_field(tmp_path / "f.knfp")
        assert back.grid == g and np.array_equal(back.values, f.values)
        head = (tmp_path / "f.knfp").read_bytes()[:64]
        assert head[:4] == b"KNFP"
        assert (tmp_path / "f.knfp").stat().st_size == 64 + 8 * g.size

    def test_slice_csv(self, tmp_path):
        g = PhaseGrid.phase(1, 2.0, 8, 2.0, 8)
        f = PhaseField(g, np.arange(64.0).reshape(8, 8))
        field_slice_csv(tmp_path / "s.csv", f, fixed={1: 3})
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "x1,value" and len(lines) == 9
        assert float(lines[1].split(",")[1]) == 3.0
