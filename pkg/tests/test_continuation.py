from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probekit.continuation import (
    SourceCurve,
    ThreeSpheresParams,
    circle_sup,
    estimate_tau,
    homogeneous_harmonic,
    random_harmonic,
    runge_approximate,
    three_spheres_check,
    wedge_eval_set,
)
from probekit.errors import ArgumentError, DomainError


def const(c):
    return lambda pts: np.full(len(pts), c)


class TestParams:
    @pytest.mark.parametrize("l1,l2", [(1.0, 2.0), (2.0, 1.5), (0.5, 2.0)])
    def test_bad_radii(self, l1, l2):
        with pytest.raises(ArgumentError):
            ThreeSpheresParams(l1, l2)

    @pytest.mark.parametrize("tau", [0.0, -0.1, 1.5])
    def test_bad_tau(self, tau):
        with pytest.raises(ArgumentError):
            ThreeSpheresParams(1.5, 2.0, tau)

    def test_homogeneous_tau(self):
        p = ThreeSpheresParams(1.5, 2.0)
        assert p.homogeneous_tau == pytest.approx(math.log(4 / 3) / math.log(2))


class TestThreeSpheres:
    def test_constant_is_equality(self):
        res = three_spheres_check(const(2.5), (0.3, -0.1), 0.4, ThreeSpheresParams(1.5, 2.0, 0.3))
        assert res.lhs == pytest.approx(res.rhs, rel=1e-14)
        assert res.satisfied

    def test_circle_sup_of_homogeneous(self):
        assert circle_sup(homogeneous_harmonic(3), (0, 0), 2.0) == pytest.approx(8.0, rel=1e-12)

    @pytest.mark.parametrize("m", [1, 2, 5, 9])
    def test_homogeneous_sharp(self, m):
        p = ThreeSpheresParams(1.5, 2.0)
        tight = ThreeSpheresParams(1.5, 2.0, p.homogeneous_tau)
        res = three_spheres_check(homogeneous_harmonic(m, 0.3), (0, 0), 1.0, tight)
        assert res.lhs == pytest.approx(res.rhs, rel=1e-9)
        worse = ThreeSpheresParams(1.5, 2.0, p.homogeneous_tau + 0.02)
        assert not three_spheres_check(homogeneous_harmonic(m), (0, 0), 1.0, worse).satisfied

    def test_harmonicity_radius(self):
        with pytest.raises(DomainError):
            three_spheres_check(const(1.0), (0, 0), 1.0, ThreeSpheresParams(1.5, 2.0), harmonic_radius=1.9)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3), r=st.floats(0.2, 2.0))
    def test_scale_invariance(self, seed, scale, r):
        v = random_harmonic(np.random.default_rng(seed), 6)
        p = ThreeSpheresParams(1.5, 2.0, 0.5)
        a = three_spheres_check(v, (0, 0), r, p)
        b = three_spheres_check(lambda pts: scale * v(pts), (0, 0), r, p)
        assert b.lhs == pytest.approx(scale * a.lhs, rel=1e-9)
        assert b.rhs == pytest.approx(scale * a.rhs, rel=1e-9)
        assert a.satisfied == b.satisfied


class TestEstimateTau:
    def test_constants(self):
        assert estimate_tau([const(1.0), const(-3.0)], (0, 0), 1.0, 1.5, 2.0) == 1.0

    def test_empty(self):
        with pytest.raises(ArgumentError):
            estimate_tau([], (0, 0), 1.0, 1.5, 2.0)

    def test_homogeneous_family(self):
        ens = [homogeneous_harmonic(m) for m in range(1, 8)]
        tau = estimate_tau(ens, (0, 0), 1.0, 1.5, 2.0)
        assert tau == pytest.approx(ThreeSpheresParams(1.5, 2.0).homogeneous_tau, abs=1e-2)

    def test_weakly_monotone_in_l1(self):
        rng = np.random.default_rng(3)
        ens = [random_harmonic(rng, 8) for _ in range(10)]
        taus = [estimate_tau(ens, (0, 0), 1.0, l1, 2.0) for l1 in (1.2, 1.5, 1.8)]
        assert taus[0] >= taus[1] - 1e-3 >= taus[2] - 2e-3

    def test_random_ensemble_passes(self):
        rng = np.random.default_rng(11)
        ens = [random_harmonic(rng, 10) for _ in range(30)]
        tau = estimate_tau(ens, (0, 0), 1.0, 1.5, 2.0)
        p = ThreeSpheresParams(1.5, 2.0, tau)
        assert all(three_spheres_check(v, (0, 0), 1.0, p).satisfied for v in ens)


class TestRunge:
    def test_exterior_target(self, unit_disk):
        pts = wedge_eval_set(unit_disk, (1.0, 0.0), (0.999, 0.0), 0.01, 1e-3)
        fit = runge_approximate((2.5, 0.4), SourceCurve((0, 0), 1.3, 128, 1e-12), pts, unit_disk)
        assert fit.residual < 1e-6

    def test_no_sources(self, unit_disk):
        fit = runge_approximate((2.5, 0.4), SourceCurve((0, 0), 1.3, 0), [[0.1, 0.1], [0.2, 0.0]])
        assert fit.residual == 1.0
        assert not fit.evaluate(np.zeros((3, 2))).any()

    def test_curve_inside_domain(self, unit_disk):
        with pytest.raises(DomainError):
            runge_approximate((2.0, 0.0), SourceCurve((0, 0), 0.8, 16), [[0.1, 0.1]], unit_disk)

    def test_margin(self, unit_disk):
        with pytest.raises(ArgumentError):
            SourceCurve.around(unit_disk, 0.0, 16)

    def test_nested_source_sets(self, unit_disk):
        y, entry = np.array([0.6, 0.0]), np.array([1.0, 0.0])
        pts = wedge_eval_set(unit_disk, entry, y, 0.3, 0.05)
        res = [runge_approximate(y, SourceCurve((0, 0), 1.2, n, 1e-10), pts, warn=False).residual
               for n in (16, 32, 64, 128)]
        # each set contains the previous one
        assert all(b <= a * (1 + 1e-6) for a, b in zip(res, res[1:]))

    def test_wedge_excludes_needle(self, unit_disk):
        y = np.array([0.5, 0.0])
        pts = wedge_eval_set(unit_disk, (1.0, 0.0), y, 0.2, 0.05)
        assert np.all(np.linalg.norm(pts - y, axis=1) > 0.05)
        on_needle = (np.abs(pts[:, 1]) < 1e-9) & (pts[:, 0] > 0.5)
        assert not on_needle.any()
