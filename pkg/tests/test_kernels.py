import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinfp.grid import PhaseField, PhaseGrid, lp_norm
from kinfp.kernels import (KernelSpec, biot_savart_2d, convolve_drift, cutoff_kernel,
                           cutoff_rate, dirac_x, kernel_besov_profile, kernel_samples,
                           lattice_multiplier, multiplier, porous_medium, profile_slope,
                           riesz_constant, riesz_grad, sqg_riesz_2d)

G2 = PhaseGrid.position(2, 2 * np.pi, 64)


def periodic_riesz_oracle(gamma, f, images=4000):
    """Real-space periodic convolution with x|x|^(gamma-2) on a 1-d torus.

    The periodic kernel is the box kernel plus the image sum
    ``c(z) = sum_{m != 0} K(z + mL)``, whose tail beyond ``images`` is
    ``-2 z L^(gamma-2) (M + 1/2)^(gamma-1)`` to leading order. Both parts are
    odd, so the singularity is removed by subtracting f(x) and the unpaired
    antipodal node gets the average value 0.
    """
    g = f.grid
    L, h = g.box_x, g.dx
    x = g.coord(0).ravel()
    d = (x[:, None] - x[None, :] + L / 2) % L - L / 2
    m = np.arange(1, images + 1)
    z = np.linspace(-L / 2, L / 2, 2001)

    def kern(y):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(y == 0, 0.0, np.sign(y) * np.abs(y) ** (gamma - 1))

    c = np.array([np.sum(kern(zz + m * L) + kern(zz - m * L)) for zz in z])
    c -= 2 * z * L ** (gamma - 2) * (images + 0.5) ** (gamma - 1)
    total = kern(d) + np.interp(d.ravel(), z, c).reshape(d.shape)
    total[np.isclose(d, -L / 2)] = 0.0
    fv = f.values
    out = (total * (fv[None, :] - fv[:, None])).sum(axis=1) * h
    return out - out.mean()


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            KernelSpec("nope")
        with pytest.raises(ValueError):
            porous_medium(1.5)
        with pytest.raises(ValueError):
            riesz_grad(1.0, sign=2.0)
        with pytest.raises(ValueError):
            KernelSpec("dirac_x")
        with pytest.raises(ValueError):
            dirac_x(riesz_grad(1.0), acts_on="w")
        with pytest.raises(ValueError):
            riesz_grad(1.0, mollify_eps=-1.0)

    def test_gamma_range(self):
        g1 = PhaseGrid.position(1, 1.0, 16)
        with pytest.raises(ValueError):
            lattice_multiplier(riesz_grad(1.5), g1)
        with pytest.raises(ValueError):
            lattice_multiplier(biot_savart_2d(), g1)

    def test_dict_round_trip(self):
        spec = dirac_x(riesz_grad(1.0, mollify_eps=0.2), acts_on="x_marginal", sign=-1.0)
        back = KernelSpec.from_dict(spec.to_dict())
        assert back == spec and hash(back) == hash(spec)
        with pytest.raises(ValueError):
            KernelSpec.from_dict({"family": "zero", "colour": 1})
        with pytest.raises(ValueError):
            KernelSpec.from_dict({"gamma": 1.0})

    def test_divergence_free_flag(self):
        assert biot_savart_2d().divergence_free and sqg_riesz_2d().divergence_free
        assert not riesz_grad(1.0).divergence_free


class TestMultiplier:
    @pytest.mark.parametrize("spec", [biot_savart_2d(), sqg_riesz_2d()])
    def test_orthogonal_to_xi(self, spec):
        m = lattice_multiplier(spec, G2)
        dot = m[0] * G2.freq(0) + m[1] * G2.freq(1)
        scale = np.abs(G2.freq(0)).max() * max(np.abs(c).max() for c in m)
        assert np.abs(dot).max() <= 1e-14 * scale

    def test_sqg_unit_modulus(self):
        xi = [G2.freq(0) + 0 * G2.freq(1), G2.freq(1) + 0 * G2.freq(0)]
        m = multiplier(sqg_riesz_2d(), xi)
        mod = np.sqrt(np.abs(m[0]) ** 2 + np.abs(m[1]) ** 2)
        nz = (xi[0] ** 2 + xi[1] ** 2) > 0
        assert np.allclose(mod[nz], 1.0, atol=1e-15)

    @pytest.mark.parametrize("spec,grid", [
        (riesz_grad(0.5), PhaseGrid.position(1, 3.0, 32)),
        (riesz_grad(1.0), G2), (biot_savart_2d(), G2), (sqg_riesz_2d(), G2),
        (porous_medium(0.5), G2), (porous_medium(1.0), PhaseGrid.position(1, 2.0, 16))])
    def test_zero_mode_gauge(self, spec, grid):
        for m in lattice_multiplier(spec, grid):
            assert m.flat[0] == 0.0

    @pytest.mark.parametrize("gamma", [0.3, 0.5, 0.9, 1.0])
    def test_riesz_constant_d1(self, gamma):
        # FT of sign(x)|x|^(gamma-1) is -2 i Gamma(gamma) sin(pi gamma / 2) xi^(-gamma)
        ref = -2 * math.gamma(gamma) * math.sin(math.pi * gamma / 2)
        assert riesz_constant(1, gamma) == pytest.approx(ref, rel=1e-14)

    def test_riesz_constant_d2(self):
        # FT of x/|x|^2 in the plane is -2 pi i xi/|xi|^2
        assert riesz_constant(2, 1.0) == pytest.approx(-2 * math.pi, rel=1e-14)

    @pytest.mark.parametrize("gamma", [0.5, 1.0])
    def test_real_space_convolution_oracle(self, gamma):
        g = PhaseGrid.position(1, 2 * np.pi, 2048)
        f = PhaseField.from_function(g, lambda x: np.exp(np.cos(x)) * np.sin(x)
                                     + 0.3 * np.cos(2 * x))
        h = convolve_drift(riesz_grad(gamma), f)[0].values
        ref = periodic_riesz_oracle(gamma, f)
        assert np.linalg.norm(h - h.mean() - ref) / np.linalg.norm(ref) <= 1e-3

    def test_biot_savart_matches_riesz(self):
        # K_BS = (-x2, x1)/(2 pi |x|^2) is the rotated riesz_grad(1) kernel over 2 pi
        bs = lattice_multiplier(biot_savart_2d(), G2)
        rg = lattice_multiplier(riesz_grad(1.0), G2)
        assert np.allclose(bs[0], -rg[1] / (2 * np.pi), atol=1e-15)
        assert np.allclose(bs[1], rg[0] / (2 * np.pi), atol=1e-15)

    def test_mollification(self):
        g = PhaseGrid.position(1, 2 * np.pi, 32)
        a = lattice_multiplier(riesz_grad(1.0), g)[0]
        b = lattice_multiplier(riesz_grad(1.0, mollify_eps=0.3), g)[0]
        assert np.allclose(b, a * np.exp(-0.5 * 0.09 * g.freq(0) ** 2))


class TestConvolveDrift:
    def test_zero_input(self):
        out = convolve_drift(biot_savart_2d(), PhaseField.zeros(G2))
        assert all(np.all(c.values == 0) for c in out)

    def test_single_mode(self):
        g = PhaseGrid.position(1, 2 * np.pi, 32)
        f = PhaseField.from_function(g, lambda x: np.cos(3 * x))
        h = convolve_drift(riesz_grad(0.5), f)[0].values
        c = riesz_constant(1, 0.5)
        # multiplier c i xi |xi|^{-1.5} acting on cos(3x)
        ref = -c * 3 ** (-0.5) * np.sin(3 * g.coord(0))
        assert np.abs(h - ref).max() < 1e-13

    def test_vpfp_lift_independent_of_v(self):
        g = PhaseGrid.phase(1, 4 * np.pi, 32, 12.0, 32)
        u = PhaseField.from_function(g, lambda x, v: (1 + 0.4 * np.cos(x / 2)) * np.exp(-v * v))
        spec = dirac_x(riesz_grad(1.0), acts_on="x_marginal")
        h = convolve_drift(spec, u)[0].values
        assert np.abs(h - h[:, :1]).max() < 1e-13
        gx = PhaseField(g.position_grid("x"), u.values.sum(axis=1) * g.dv)
        ref = convolve_drift(riesz_grad(1.0), gx)[0].values
        assert np.abs(h[:, 0] - ref).max() < 1e-13

    def test_porous_lift_acts_in_v(self):
        g = PhaseGrid.phase(1, 2 * np.pi, 16, 2 * np.pi, 32)
        u = PhaseField.from_function(g, lambda x, v: (2 + np.cos(x)) * np.cos(2 * v))
        h = convolve_drift(dirac_x(porous_medium(0.5)), u)[0].values
        # i xi |xi|^{-1} on cos(2v) gives -sin(2v)
        ref = -(2 + np.cos(g.coord(0))) * np.sin(2 * g.coord(1))
        assert np.abs(h - ref).max() < 1e-13

    @given(seed=st.integers(0, 10_000), a=st.floats(-3, 3), b=st.floats(-3, 3))
    def test_linear(self, seed, a, b):
        rng = np.random.default_rng(seed)
        g = PhaseGrid.position(2, 2 * np.pi, 16)
        f = PhaseField(g, rng.standard_normal(g.shape))
        k = PhaseField(g, rng.standard_normal(g.shape))
        lhs = convolve_drift(biot_savart_2d(), a * f + b * k)
        rf, rk = convolve_drift(biot_savart_2d(), f), convolve_drift(biot_savart_2d(), k)
        for c, cf, ck in zip(lhs, rf, rk):
            assert np.abs(c.values - (a * cf.values + b * ck.values)).max() <= 1e-12 * (
                1 + abs(a) + abs(b)) * 10

    @pytest.mark.parametrize("spec", [biot_savart_2d(), sqg_riesz_2d()])
    def test_divergence_vanishes(self, spec):
        f = PhaseField(G2, np.random.default_rng(1).standard_normal(G2.shape))
        h = convolve_drift(spec, f)
        div = sum(np.real(np.fft.ifftn(1j * G2.freq(a) * np.fft.fftn(h[a].values)))
                  for a in range(2))
        assert np.abs(div).max() <= 1e-12 * max(np.abs(c.values).max() for c in h)

    def test_grid_mismatch(self):
        with pytest.raises(TypeError):
            convolve_drift(biot_savart_2d(), np.zeros(G2.shape))


class TestCutoff:
    def test_large_eps_bounded_by_cap(self):
        g = PhaseGrid.position(1, 2.0, 64)
        spec = cutoff_kernel(riesz_grad(0.5), 1.0, g)
        assert np.abs(spec.samples).max() <= 1.0 ** (0.5 - 1) + 1e-15

    @pytest.mark.parametrize("d,gamma", [(1, 0.5), (2, 1.0)])
    def test_halving_scales_sup(self, d, gamma):
        g = PhaseGrid.position(d, 2 * np.pi, 256)
        s1 = np.abs(cutoff_kernel(riesz_grad(gamma), 0.4, g).samples).max()
        s2 = np.abs(cutoff_kernel(riesz_grad(gamma), 0.2, g).samples).max()
        assert s2 / s1 == pytest.approx(2.0 ** (d - gamma), rel=0.1)

    def test_difference_supported_in_ball(self):
        g = PhaseGrid.position(2, 2 * np.pi, 64)
        eps = 0.5
        full = kernel_samples(riesz_grad(1.0), g)
        cut = cutoff_kernel(riesz_grad(1.0), eps, g).samples
        r = np.sqrt(sum(np.broadcast_to(g.offset(a), g.shape) ** 2 for a in range(2)))
        assert np.all((full - cut)[:, r > eps] == 0.0)

    def test_rejects_small_eps(self):
        g = PhaseGrid.position(1, 1.0, 16)
        with pytest.raises(ValueError):
            cutoff_kernel(riesz_grad(0.5), g.dx, g)

    def test_cutoff_spec_drift(self):
        g = PhaseGrid.position(1, 2 * np.pi, 128)
        f = PhaseField.from_function(g, lambda x: np.cos(x))
        h = convolve_drift(riesz_grad(1.0, cutoff_eps=0.3), f)[0]
        assert np.all(np.isfinite(h.values)) and lp_norm(h, 2) > 0


class TestProfiles:
    def test_biot_savart_slope(self):
        prof = kernel_besov_profile(biot_savart_2d(), PhaseGrid.position(2, 2 * np.pi, 256),
                                    math.inf)
        assert profile_slope(prof).slope == pytest.approx(1.0, abs=0.2)

    def test_riesz_d1_flat(self):
        prof = kernel_besov_profile(riesz_grad(1.0), PhaseGrid.position(1, 2 * np.pi, 4096),
                                    math.inf)
        assert profile_slope(prof).slope == pytest.approx(0.0, abs=0.2)

    def test_mollified_decays_fast(self):
        g = PhaseGrid.position(1, 2 * np.pi, 1024)
        prof = kernel_besov_profile(riesz_grad(1.0, mollify_eps=0.3), g, math.inf)
        vals = np.array([v for _, v in prof])
        j = np.argmax(vals)
        assert vals[-1] < 1e-12 * vals[j]
        # faster than any power: successive dyadic ratios shrink
        tail = np.log2(vals[j + 2:j + 5])
        assert np.all(np.diff(np.diff(tail)) < 0)


class TestCutoffRate:
    def test_regular_kernel_difference_small(self):
        g = PhaseGrid.position(1, 2 * np.pi, 1024)
        full = kernel_samples(riesz_grad(1.0), g)
        cut = cutoff_kernel(riesz_grad(1.0), 0.1, g).samples
        # gamma = d: bounded kernel, difference only on the small ball
        assert np.abs(full - cut).max() <= 1.0

    def test_needs_three_eps(self):
        with pytest.raises(ValueError):
            cutoff_rate(riesz_grad(0.5), math.inf, 1.0, [0.4, 0.2],
                        PhaseGrid.position(1, 2 * np.pi, 256))

    def test_r_range(self):
        with pytest.raises(ValueError):
            cutoff_rate(riesz_grad(0.5), math.inf, 3.0, [0.4, 0.2, 0.1],
                        PhaseGrid.position(1, 2 * np.pi, 256))


class TestInequalities:
    @staticmethod
    def _fields(g, seeds=range(4)):
        out = []
        for s in seeds:
            c = 0.5 * s - 0.75
            out.append(PhaseField.from_function(
                g, lambda x: np.exp(-((x - c) ** 2) / (0.3 + 0.1 * s)) * np.cos((s + 1) * x)))
        return out

    def test_young_hls_constant_stable(self):
        # ||K * f||_{p'} <= C ||f||_q, 1/p' = 1/q - gamma/d (d = 1, gamma = 0.5)
        q, pp = 1.5, 6.0

        def const(n):
            g = PhaseGrid.position(1, 8.0, n)
            return max(lp_norm(convolve_drift(riesz_grad(0.5), f)[0], pp) / lp_norm(f, q)
                       for f in self._fields(g))

        c1, c2 = const(512), const(1024)
        assert c2 == pytest.approx(c1, rel=0.2)

    def test_interpolation_bounded(self):
        g = PhaseGrid.position(1, 8.0, 512)
        p, gamma = 1.5, 0.5
        theta = p * gamma
        ratios = [np.abs(convolve_drift(riesz_grad(gamma), f)[0].values).max()
                  / (lp_norm(f, p) ** theta * np.abs(f.values).max() ** (1 - theta))
                  for f in self._fields(g, range(6))]
        assert max(ratios) < 10 * min(ratios)
