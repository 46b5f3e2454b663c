"""Estimator tests: batch means, curve estimates, identity checks, and the
ensemble store, mostly against synthetic data with known answers."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpzlab.errors import DomainError, StatisticsError
from kpzlab.estimators import (CurveEstimate, EnsembleStore, _batch_reduce,
                               _second_diff, argmax_cdf, argmax_density,
                               covariance_identity, density_identity_check,
                               dkw_band, gprime_identity_check,
                               second_derivative_curve, silverman_bandwidth,
                               stationarity_check, sup_moment_stability,
                               two_point_curve, two_point_function,
                               variance_curve)
from kpzlab.initial import StepFunction


def synthetic_store(n_batches=40, per_batch=25, n_x=9, beta=1.0, seed=0):
    """Gaussian heights with Var h(x) = 1 + x^2 and argmax Z ~ N(x, 1/4)."""
    rng = np.random.default_rng(seed)
    x = np.linspace(-1.0, 1.0, n_x)
    n = n_batches * per_batch
    h = rng.standard_normal((n, n_x)) * np.sqrt(1.0 + x**2)
    z = x[None, :] + 0.5 * rng.standard_normal((n, n_x))
    return EnsembleStore(
        beta=beta, x_grid=x, h=h, z_argmax=z,
        censored=np.zeros((n, n_x), dtype=bool),
        batch_ids=np.repeat(np.arange(n_batches), per_batch),
        replica_ids=np.repeat(np.arange(n_batches), per_batch),
    )


class TestBatchReduce:
    def test_means_per_batch(self):
        v = np.array([[1.0], [3.0], [10.0], [20.0]])
        b = np.array([0, 0, 1, 1])
        out = _batch_reduce(v, b)
        assert np.allclose(out[:, 0], [2.0, 15.0])

    def test_order_invariance(self):
        rng = np.random.default_rng(1)
        v = rng.standard_normal((60, 3))
        b = rng.integers(0, 6, size=60)
        perm = rng.permutation(60)
        assert np.allclose(_batch_reduce(v, b), _batch_reduce(v[perm], b[perm]))

    def test_mask_drops_empty_batches(self):
        v = np.array([[1.0], [5.0]])
        b = np.array([0, 1])
        m = np.array([True, False])
        out = _batch_reduce(v, b, m)
        assert out.shape == (1, 1) and out[0, 0] == 1.0

    def test_all_masked_raises(self):
        with pytest.raises(StatisticsError):
            _batch_reduce(np.ones((2, 1)), np.array([0, 1]),
                          np.array([False, False]))


class TestVarianceCurve:
    def test_matches_known_variance(self):
        store = synthetic_store(n_batches=200, per_batch=40, seed=3)
        g = variance_curve(store)
        want = 1.0 + store.x_grid**2
        assert np.all(np.abs(g.mean - want) < 4.0 * g.stderr + 0.02)

    def test_min_batches_enforced(self):
        store = synthetic_store(n_batches=5)
        with pytest.raises(StatisticsError):
            variance_curve(store)


class TestArgmaxCdf:
    def test_matches_plain_ecdf(self):
        store = synthetic_store(n_batches=40, per_batch=30, seed=4)
        F = argmax_cdf(store, grid=np.linspace(-2, 2, 21))
        z = store.z_argmax[:, store.column(0.0)]
        for k, gv in enumerate(F.grid):
            assert F.mean[k] == pytest.approx(np.mean(z <= gv), abs=1e-12)

    def test_needs_enough_samples(self):
        store = synthetic_store(n_batches=30, per_batch=5)
        with pytest.raises(StatisticsError):
            argmax_cdf(store)

    def test_cdf_monotone(self):
        store = synthetic_store(seed=5)
        F = argmax_cdf(store, grid=np.linspace(-3, 3, 31))
        assert np.all(np.diff(F.mean) >= 0)


def test_dkw_band_closed_form():
    assert dkw_band(1000) == pytest.approx(np.sqrt(np.log(40.0) / 2000.0))
    with pytest.raises(DomainError):
        dkw_band(0)


def test_silverman_bandwidth_scales():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(4000)
    bw = silverman_bandwidth(z)
    assert 0.9 * 0.9 * 4000 ** -0.2 < bw < 1.1 * 0.9 * 4000 ** -0.2


class TestDensity:
    def test_kde_integrates_to_one(self):
        store = synthetic_store(n_batches=60, per_batch=30, seed=6)
        f, bw = argmax_density(store, grid=np.linspace(-3, 3, 121))
        assert np.trapezoid(f.mean, f.grid) == pytest.approx(1.0, abs=0.02)
        assert bw > 0


class TestSecondDiff:
    def test_exact_for_quadratic_uniform(self):
        x = np.linspace(-2, 2, 17)
        inner, d2 = _second_diff(x, 3.0 * x**2 + x - 5.0)
        assert np.allclose(d2, 6.0)
        assert np.allclose(inner, x[1:-1])

    def test_exact_for_quadratic_nonuniform(self):
        rng = np.random.default_rng(2)
        x = np.sort(rng.uniform(-2, 2, 15))
        _, d2 = _second_diff(x, 0.5 * x**2 - 2 * x)
        assert np.allclose(d2, 1.0)

    def test_too_coarse_rejected(self):
        with pytest.raises(DomainError):
            _second_diff(np.linspace(0, 1, 5), np.zeros(5))


class TestGprimeIdentity:
    def test_zero_residual_when_identity_holds(self):
        # build g and F so that g' = beta^2 (2F - 1) exactly
        x = np.linspace(-1, 1, 21)
        beta = 1.3
        F = 0.5 * (1.0 + np.tanh(x))        # a smooth CDF
        # integrate the rhs to get g
        rhs = beta**2 * (2.0 * F - 1.0)
        g = np.concatenate([[0.0], np.cumsum(0.5 * (rhs[1:] + rhs[:-1]) * np.diff(x))])
        gc = CurveEstimate(x, g, np.full_like(x, 1e-3), 40)
        Fc = CurveEstimate(x, F, np.full_like(x, 1e-3), 40)
        chk = gprime_identity_check(gc, Fc, beta)
        # central differences of the trapezoid integral reproduce rhs to
        # second order in the step
        assert np.max(np.abs(chk["residual"])) < 5e-3

    def test_grid_mismatch_rejected(self):
        a = CurveEstimate(np.linspace(0, 1, 9), np.zeros(9), np.ones(9), 30)
        b = CurveEstimate(np.linspace(0, 2, 9), np.zeros(9), np.ones(9), 30)
        with pytest.raises(DomainError):
            gprime_identity_check(a, b, 1.0)

    def test_store_variant_runs(self, small_store):
        g = variance_curve(small_store)
        F = argmax_cdf(small_store, grid=small_store.x_grid)
        chk = gprime_identity_check(g, F, small_store.beta, store=small_store)
        assert np.all(np.isfinite(chk["residual"]))
        assert chk["n_batches"] >= 30


class TestTwoPoint:
    def test_t_one_is_half_second_derivative(self):
        x = np.linspace(-1, 1, 21)
        g = CurveEstimate(x, x**2, np.full_like(x, 1e-4), 40)
        c = two_point_function(g, 0.0, 1.0)
        assert c == pytest.approx(1.0, abs=1e-9)

    def test_scaling_in_t(self):
        x = np.linspace(-1, 1, 21)
        g = CurveEstimate(x, x**2, np.full_like(x, 1e-4), 40)
        t = 8.0
        # C(z, t) = g''(z t^(-2/3)) / (2 t^(2/3)); with g'' = 2 constant
        assert two_point_function(g, 0.5, t) == pytest.approx(
            1.0 / t ** (2.0 / 3.0), abs=1e-9)
        curve = two_point_curve(g, t)
        assert np.allclose(curve.grid, x[1:-1] * t ** (2.0 / 3.0))

    def test_out_of_range_rejected(self):
        x = np.linspace(-1, 1, 21)
        g = CurveEstimate(x, x**2, np.full_like(x, 1e-4), 40)
        with pytest.raises(DomainError):
            two_point_function(g, 5.0, 1.0)


class TestCovarianceIdentity:
    def test_fingerprint_mismatch_rejected(self, small_store, small_plan):
        entry = small_plan[0]
        other = StepFunction([0.0, 2.0], [1.0])
        with pytest.raises(DomainError):
            covariance_identity(small_store, entry["name0"], entry["name_t"],
                                other, entry["phi2_eff"], 1.0)

    def test_runs_on_simulated_store(self, small_store, small_plan):
        entry = small_plan[0]
        out = covariance_identity(small_store, entry["name0"], entry["name_t"],
                                  entry["phi1_eff"], entry["phi2_eff"], 1.0)
        assert np.isfinite(out["z_score"])
        # small ensemble: allow a loose band, the acceptance suite tightens it
        assert abs(out["z_score"]) < 6.0


class TestStoreRoundTrip:
    def test_save_load(self, tmp_path, small_store):
        p = tmp_path / "store.npz"
        small_store.save(p)
        back = EnsembleStore.load(p)
        assert back.beta == small_store.beta
        assert np.array_equal(back.h, small_store.h)
        assert np.array_equal(back.z_argmax, small_store.z_argmax)
        assert back.fingerprint == small_store.fingerprint
        assert sorted(back.observables) == sorted(small_store.observables)
        for k in back.observables:
            assert np.array_equal(back.observables[k],
                                  small_store.observables[k])
        assert back.obs_meta.keys() == small_store.obs_meta.keys()


class TestStationarity:
    def test_brownian_increments_detected(self):
        # synthetic stationary field: h(x) - h(0) two-sided Brownian
        rng = np.random.default_rng(8)
        x = np.linspace(-1.0, 1.0, 9)
        n = 3000
        steps = rng.standard_normal((n, 8)) * np.sqrt(np.diff(x))
        h = np.concatenate([np.zeros((n, 1)), np.cumsum(steps, axis=1)], axis=1)
        h *= np.sqrt(2.0)
        k0 = 4
        h -= h[:, [k0]]
        store = EnsembleStore(
            beta=np.sqrt(2.0), x_grid=x, h=h,
            z_argmax=np.zeros_like(h), censored=np.zeros_like(h, dtype=bool),
            batch_ids=np.repeat(np.arange(60), 50),
            replica_ids=np.repeat(np.arange(60), 50),
        )
        out = stationarity_check(store, x0=0.0)
        assert out["max_abs_z"] < 4.0

    def test_sup_moment_stability_ratio(self, small_store):
        out = sup_moment_stability(small_store)
        assert 0.5 < out["ratio"] < 2.0


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(2, 8), st.integers(0, 1000))
def test_property_batch_reduce_worker_split_invariance(nb, per, seed):
    """Splitting records across 'workers' never changes batch means."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((nb * per, 2))
    b = np.repeat(np.arange(nb), per)
    # simulate out-of-order arrival from parallel workers
    perm = rng.permutation(nb * per)
    assert np.allclose(_batch_reduce(v, b), _batch_reduce(v[perm], b[perm]))
