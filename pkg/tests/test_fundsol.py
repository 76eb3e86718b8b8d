from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probekit.errors import ArgumentError, SingularityError
from probekit.fundsol import MaterialParams, gamma, gamma_plus, gamma_plus_frame, image_point

coord = st.floats(-2.0, 2.0, allow_nan=False)
off_plane = st.one_of(st.floats(0.05, 2.0), st.floats(-2.0, -0.05))


def one_sided_normal_derivative(f, x, sign, eta=1e-4):
    """Second-order one-sided difference of ``f`` along the last axis at ``x``."""
    e = np.zeros_like(x)
    e[-1] = sign * eta
    return sign * (-3 * f(x) + 4 * f(x + e) - f(x + 2 * e)) / (2 * eta)


def transmission_residuals(dim, k, rng, n=100):
    cont, flux = [], []
    for _ in range(n):
        x = np.append(rng.uniform(-1, 1, dim - 1), 0.0)
        y = np.append(rng.uniform(-1, 1, dim - 1), rng.choice([-1, 1]) * rng.uniform(0.2, 1.0))
        up = gamma_plus(x, y, k, side=1).value
        dn = gamma_plus(x, y, k, side=-1).value
        scale = np.linalg.norm(gamma(x, y).gradient_x)
        cont.append(abs(up - dn) / abs(gamma(x, y).value + 1.0))
        d_up = one_sided_normal_derivative(lambda z: gamma_plus(z, y, k, side=1).value, x, 1)
        d_dn = one_sided_normal_derivative(lambda z: gamma_plus(z, y, k, side=-1).value, x, -1)
        flux.append(abs(k * d_up - d_dn) / scale)
    return max(cont), max(flux)


class TestGamma:
    def test_unit_distance_3d(self):
        assert gamma([1.0, 0, 0], [0, 0, 0]).value == pytest.approx(1 / (4 * math.pi), rel=1e-15)

    def test_unit_distance_2d(self):
        assert gamma([0.6, 0.8], [0.0, 0.0]).value == pytest.approx(0.0, abs=1e-16)

    def test_pole(self):
        with pytest.raises(SingularityError):
            gamma([0.1, 0.2], [0.1, 0.2])

    def test_dimension_mismatch(self):
        with pytest.raises(ArgumentError):
            gamma([0.0, 1.0], [0.0, 0.0, 0.0])

    @pytest.mark.parametrize("dim", [2, 3])
    def test_gradient_finite_differences(self, dim, rng):
        for _ in range(20):
            x, y = rng.uniform(-1, 1, dim), rng.uniform(-1, 1, dim)
            g = gamma(x, y).gradient_x
            step = 1e-4 * np.linalg.norm(x - y)
            fd = np.empty(dim)
            for i in range(dim):
                e = np.zeros(dim)
                e[i] = step
                fd[i] = (gamma(x + e, y).value - gamma(x - e, y).value) / (2 * step)
            assert np.linalg.norm(fd - g) <= 1e-8 * np.linalg.norm(g) + 1e-12


class TestImagePoint:
    def test_reflects_last(self):
        np.testing.assert_array_equal(image_point([1.0, 2.0, 3.0]), [1.0, 2.0, -3.0])

    def test_fixed_point(self):
        np.testing.assert_array_equal(image_point([0.0, 0.0]), [0.0, 0.0])

    @given(st.lists(coord, min_size=2, max_size=3))
    def test_involution(self, x):
        np.testing.assert_array_equal(image_point(image_point(x)), x)


class TestGammaPlus:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_no_contrast_is_free_space(self, dim, rng):
        x = rng.uniform(-1, 1, (50, dim))
        y = rng.uniform(-1, 1, (50, dim))
        np.testing.assert_allclose(gamma_plus(x, y, 1.0).value, gamma(x, y).value, rtol=1e-15)

    def test_material_rejects_unit_contrast(self):
        with pytest.raises(ArgumentError):
            MaterialParams(1.0)
        assert MaterialParams(3.0).mu == pytest.approx(0.5)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(coord, min_size=1, max_size=2), off_plane, st.lists(coord, min_size=1, max_size=2),
           off_plane, st.floats(0.1, 10.0))
    def test_symmetry(self, xp, xn, yp, yn, k):
        n = min(len(xp), len(yp))
        x = np.array(xp[:n] + [xn])
        y = np.array(yp[:n] + [yn])
        if np.linalg.norm(x - y) < 1e-3:
            return
        a = gamma_plus(x, y, k).value
        b = gamma_plus(y, x, k).value
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a))

    @pytest.mark.parametrize("dim", [2, 3])
    def test_piecewise_formula(self, dim):
        k = 3.0
        mu = 0.5
        y = np.zeros(dim)
        y[-1] = 0.4
        ys = image_point(y)
        x_up = np.zeros(dim)
        x_up[0], x_up[-1] = 0.3, 0.7
        x_dn = x_up.copy()
        x_dn[-1] = -0.7
        assert gamma_plus(x_up, y, k).value == pytest.approx(
            gamma(x_up, y).value / k + mu / k * gamma(x_up, ys).value, rel=1e-14)
        assert gamma_plus(x_dn, y, k).value == pytest.approx(2 / (k + 1) * gamma(x_dn, y).value, rel=1e-14)
        y_dn = image_point(y)
        assert gamma_plus(x_dn, y_dn, k).value == pytest.approx(
            gamma(x_dn, y_dn).value - mu * gamma(x_dn, image_point(y_dn)).value, rel=1e-14)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_transmission(self, dim):
        cont, flux = transmission_residuals(dim, 2.5, np.random.default_rng(dim))
        assert cont < 1e-12
        assert flux < 1e-6

    def test_harmonic_in_each_phase_2d(self, rng):
        k, h = 2.0, 1e-3
        y = np.array([0.1, 0.3])
        for _ in range(30):
            x = np.array([rng.uniform(-1, 1), rng.choice([-1, 1]) * rng.uniform(0.05, 1)])
            if np.linalg.norm(x - y) < 0.1:
                continue
            f = lambda z: gamma_plus(z, y, k).value  # noqa: E731
            lap = sum(f(x + s * e) for e in np.eye(2) for s in (h, -h)) - 4 * f(x)
            assert abs(lap) < 1e-5 * abs(f(x)) + 1e-9

    def test_gradient_matches_values(self, rng):
        y = np.array([0.2, -0.3])
        for _ in range(20):
            x = np.array([rng.uniform(-1, 1), rng.choice([-1, 1]) * rng.uniform(0.05, 1)])
            g = gamma_plus(x, y, 4.0).gradient_x
            fd = np.array([(gamma_plus(x + e, y, 4.0).value - gamma_plus(x - e, y, 4.0).value) / 2e-6
                           for e in 1e-6 * np.eye(2)])
            np.testing.assert_allclose(fd, g, rtol=1e-6, atol=1e-9)

    def test_continuity_in_k(self):
        x, y = np.array([0.3, 0.5]), np.array([-0.2, -0.4])
        errs = [abs(gamma_plus(x, y, 1 + t).value - gamma(x, y).value) for t in (1e-1, 1e-2, 1e-3)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-3

    def test_interface_pair_is_singular(self):
        with pytest.raises(SingularityError):
            gamma_plus([0.1, 0.0], [0.3, 0.0], 2.0)

    def test_frame_matches_axis_aligned(self):
        x, y = np.array([0.3, 0.5]), np.array([-0.2, 0.2])
        a = gamma_plus(x, y, 2.0)
        b = gamma_plus_frame(x, y, 2.0, origin=(0.0, 0.0), normal=(0.0, 1.0))
        assert b.value == pytest.approx(a.value, rel=1e-14)
        np.testing.assert_allclose(b.gradient_x, a.gradient_x, rtol=1e-13)
