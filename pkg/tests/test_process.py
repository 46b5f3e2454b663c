"""Composition and Malliavin-derivative tests on small lattices."""

import numpy as np
import pytest

from kpzlab.errors import DomainError, SampleInvalidError
from kpzlab.initial import StepFunction, sample_path
from kpzlab.lpp import LandscapeSlice, LatticeGeometry, WeightField, landscape_slice
from kpzlab.process import (HeightSample, compose_height,
                            directional_derivative_check, malliavin_field,
                            observable_smooth, observable_step, time_t_argmax)
from kpzlab.initial import bump


def synthetic_slice(z_grid, x_grid, values):
    geom = LatticeGeometry(big_n=4000, z_grid=np.asarray(z_grid, dtype=float),
                           x_grid=np.asarray(x_grid, dtype=float))
    return LandscapeSlice(values=np.asarray(values, dtype=float),
                          geometry=geom, replica_id=0)


def flat_path(z_grid, values):
    return __import__("kpzlab.initial", fromlist=["BrownianPath"]).BrownianPath(
        z_grid=np.asarray(z_grid, dtype=float),
        values=np.asarray(values, dtype=float), seed=0)


class TestComposeHeight:
    def test_exact_argmax_on_synthetic_surface(self):
        z = np.array([-1.0, 0.0, 1.0])
        sl = synthetic_slice(z, [0.0], [[0.0], [5.0], [1.0]])
        path = flat_path(z, [0.0, 0.0, 0.0])
        hs = compose_height(sl, path, beta=1.0)
        assert hs.h[0] == 5.0
        assert hs.z_argmax[0] == pytest.approx(0.0, abs=1e-9)
        assert not hs.censored[0]

    def test_rightmost_tie_breaking(self):
        z = np.array([-1.0, 0.0, 1.0, 2.0])
        sl = synthetic_slice(z, [0.0], [[1.0], [3.0], [3.0], [0.0]])
        hs = compose_height(sl, flat_path(z, np.zeros(4)), beta=0.0)
        assert hs.z_argmax[0] == pytest.approx(1.0)   # the larger z of the two tied peaks

    def test_censoring_flags_boundary(self):
        z = np.array([-1.0, 0.0, 1.0])
        sl = synthetic_slice(z, [0.0], [[9.0], [1.0], [0.0]])
        hs = compose_height(sl, flat_path(z, np.zeros(3)), beta=0.0)
        assert hs.censored[0]
        with pytest.raises(SampleInvalidError):
            hs.z_at(0.0)

    def test_beta_scales_path_contribution(self):
        z = np.array([-1.0, 0.0, 1.0])
        sl = synthetic_slice(z, [0.0], [[0.0], [0.0], [0.0]])
        path = flat_path(z, [0.0, 0.0, 2.0])
        hs = compose_height(sl, path, beta=3.0)
        assert hs.h[0] == pytest.approx(6.0)
        assert hs.z_argmax[0] == pytest.approx(1.0)

    def test_grid_mismatch_rejected(self):
        z = np.array([-1.0, 0.0, 1.0])
        sl = synthetic_slice(z, [0.0], np.zeros((3, 1)))
        path = flat_path(np.array([-2.0, 0.0, 2.0]), np.zeros(3))
        with pytest.raises(DomainError):
            compose_height(sl, path, beta=1.0)

    def test_negative_beta_rejected(self):
        z = np.array([-1.0, 0.0, 1.0])
        sl = synthetic_slice(z, [0.0], np.zeros((3, 1)))
        with pytest.raises(DomainError):
            compose_height(sl, flat_path(z, np.zeros(3)), beta=-1.0)


class TestTimeTArgmax:
    def test_scaling(self):
        assert time_t_argmax(0.5, x=1.0, t=8.0) == pytest.approx(1.0 + 4.0 * 0.5)

    def test_t_one_is_identity_plus_shift(self):
        z = np.array([-0.2, 0.7])
        assert np.allclose(time_t_argmax(z, 0.25, 1.0), 0.25 + z)

    def test_bad_t_rejected(self):
        with pytest.raises(DomainError):
            time_t_argmax(0.0, 0.0, 0.0)


class TestObservables:
    def _sample(self):
        x = np.array([-1.0, 0.0, 1.0, 2.0])
        return HeightSample(x_grid=x, h=np.array([1.0, 3.0, 2.0, 5.0]),
                            z_argmax=np.zeros(4), censored=np.zeros(4, bool),
                            replica_id=0, beta=1.0)

    def test_step_observable_telescopes(self):
        s = self._sample()
        phi = StepFunction([-1.0, 1.0, 2.0], [2.0, -1.0])
        want = 2.0 * (2.0 - 1.0) + (-1.0) * (5.0 - 2.0)
        assert observable_step(s, phi) == pytest.approx(want)

    def test_step_breakpoints_must_be_on_grid(self):
        s = self._sample()
        with pytest.raises(DomainError):
            observable_step(s, StepFunction([-1.0, 0.3], [1.0]))

    def test_smooth_observable_on_linear_height(self):
        # h(x) = x  =>  -int phi' h = int phi (by parts, compact support)
        x = np.linspace(-2, 2, 801)
        s = HeightSample(x_grid=x, h=x.copy(), z_argmax=np.zeros_like(x),
                         censored=np.zeros_like(x, bool), replica_id=0, beta=1.0)
        phi = bump(-1.0, 1.0)
        xs = np.linspace(-1, 1, 200_001)
        want = np.trapezoid(phi(xs), xs)
        assert observable_smooth(s, phi) == pytest.approx(want, abs=1e-4)

    def test_smooth_support_must_fit_grid(self):
        s = self._sample()
        with pytest.raises(DomainError):
            observable_smooth(s, bump(-3.0, 0.0))


class TestMalliavin:
    def _sample(self):
        x = np.array([0.0, 1.0, 2.0])
        z = np.array([-0.4, 0.1, 0.9])
        return HeightSample(x_grid=x, h=np.zeros(3), z_argmax=z,
                            censored=np.zeros(3, bool), replica_id=0, beta=2.0)

    def test_field_structure_and_norm(self):
        s = self._sample()
        phi = StepFunction([0.0, 1.0, 2.0], [3.0, -1.0])
        mf = malliavin_field(s, phi)
        assert np.allclose(mf.field.breakpoints, [-0.4, 0.1, 0.9])
        assert np.allclose(mf.field.values, [6.0, -2.0])
        want = 36.0 * 0.5 + 4.0 * 0.8
        assert mf.norm_sq == pytest.approx(want)

    def test_inner_product_is_l2_pairing(self):
        s = self._sample()
        phi = StepFunction([0.0, 1.0, 2.0], [3.0, -1.0])
        mf = malliavin_field(s, phi)
        phi1 = StepFunction([-1.0, 0.5], [2.0])
        u = np.linspace(-2, 2, 400_001)
        want = np.trapezoid(mf.field(u) * phi1(u), u)
        assert mf.inner_product(phi1) == pytest.approx(want, abs=1e-3)

    def test_censored_argmax_rejected(self):
        s = self._sample()
        bad = HeightSample(x_grid=s.x_grid, h=s.h, z_argmax=s.z_argmax,
                           censored=np.array([True, False, False]),
                           replica_id=0, beta=2.0)
        with pytest.raises(SampleInvalidError):
            malliavin_field(bad, StepFunction([0.0, 1.0], [1.0]))


class TestDirectionalDerivative:
    def test_fd_matches_exact_on_real_replicas(self):
        geom = LatticeGeometry(big_n=96, z_grid=np.arange(-30, 31) * 0.05,
                               x_grid=np.array([0.0, 0.25, 0.5]))
        from kpzlab.simulate import snap_to_grid
        phi_dir = snap_to_grid(StepFunction([-0.5, 0.5], [1.0]), geom.z_grid)
        phi_obs = snap_to_grid(StepFunction([0.0, 0.5], [1.0]), geom.x_grid)
        agree = moved_count = 0
        total = 12
        for r in range(total):
            fld = WeightField(n=geom.required_field_half_width(),
                              master_seed=31, replica_id=r)
            sl = landscape_slice(fld, geom)
            path = sample_path(geom.z_grid, 31, stream=r)
            fd, exact, moved = directional_derivative_check(
                sl, path, phi_dir, phi_obs, beta=1.0, eps=1e-4)
            if moved:
                moved_count += 1
                continue
            assert fd == pytest.approx(exact, abs=1e-8)
            agree += 1
        assert agree + moved_count == total
        assert agree >= 1

    def test_bad_eps_rejected(self):
        z = np.array([-1.0, 0.0, 1.0])
        sl = synthetic_slice(z, [0.0], np.zeros((3, 1)))
        with pytest.raises(DomainError):
            directional_derivative_check(
                sl, flat_path(z, np.zeros(3)), StepFunction([-1, 1], [1.0]),
                StepFunction([0.0, 1.0], [1.0]), beta=1.0, eps=0.0)
