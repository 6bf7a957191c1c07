import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefopt.acquisition import (
    AcquisitionContext,
    DecaySchedule,
    MaximizerOptions,
    PopulationGallery,
    acquisition_objective,
    decay,
    expected_improvement,
    maximize_acquisition,
    taf_acquisition,
    taf_m_weights,
    taf_r_weights,
    two_step_acquisition,
)
from prefopt.errors import InvalidInputError, InvalidStateError
from conftest import make_dataset, make_gp


class _StubGP:
    """Predictable surrogate: fixed mean/variance callables."""

    def __init__(self, mean_fn, var_fn=lambda x: np.zeros(len(x)), dimension=2, train_means=(0.0,)):
        self.mean_fn = mean_fn
        self.var_fn = var_fn
        self.dimension = dimension
        self._train_means = np.asarray(train_means)

    def predict_mean(self, x, fast=False):
        x = np.atleast_2d(x)
        return self.mean_fn(x)

    def predict(self, x, fast=False):
        x = np.atleast_2d(x)
        return self.mean_fn(x), self.var_fn(x)


def _phi(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


class TestExpectedImprovement:
    def test_zero_sigma_zero_gap(self):
        gp = _StubGP(lambda x: np.full(len(x), 1.0))
        assert expected_improvement(gp, np.array([0.5, 0.5]), 1.0) == 0.0

    def test_zero_sigma_positive_gap(self):
        gp = _StubGP(lambda x: np.full(len(x), 1.5))
        assert expected_improvement(gp, np.array([0.5, 0.5]), 1.0) == pytest.approx(0.5, abs=0)

    def test_at_incumbent_with_unit_sigma_equals_phi0(self):
        # Closed form: (mu - ymax) Phi(0) + sigma phi(0) = phi(0) ~ 0.39894
        gp = _StubGP(lambda x: np.zeros(len(x)), var_fn=lambda x: np.ones(len(x)))
        ei = expected_improvement(gp, np.array([0.5, 0.5]), 0.0)
        assert ei == pytest.approx(_phi(0.0), rel=1e-12)
        assert ei == pytest.approx(0.39894, abs=5e-6)

    def test_nondecreasing_in_mean(self):
        ymax = 0.3
        values = []
        for mu in np.linspace(-1.0, 2.0, 25):
            gp = _StubGP(lambda x, mu=mu: np.full(len(x), mu), var_fn=lambda x: np.full(len(x), 0.49))
            values.append(expected_improvement(gp, np.array([0.1, 0.1]), ymax))
        assert all(b >= a - 1e-15 for a, b in zip(values, values[1:]))

    def test_real_gp_batch_nonnegative(self, rng):
        gp = make_gp(rng.uniform(size=(12, 2)), rng.normal(size=12))
        ei = expected_improvement(gp, rng.uniform(size=(50, 2)), 0.5)
        assert np.all(ei >= 0.0)


class TestDecay:
    def test_simulated_test_settings(self):
        # d1=5, d2=0.1: plateau 1, then linear to 0 at k=15.
        s = DecaySchedule(5, 0.1)
        assert decay(s, 5) == 1.0
        assert decay(s, 10) == pytest.approx(0.5, abs=0)
        assert decay(s, 15) == 0.0

    def test_plateau_start(self):
        assert decay(DecaySchedule(3, 0.25), 1) == 1.0

    def test_deployment_settings_cut_off_immediately(self):
        # d1=3, d2=8: 1 - (4-3)*8 < 0, clamped; window ends before k=4.
        s = DecaySchedule(3, 8.0)
        assert decay(s, 3) == 1.0
        assert decay(s, 4) == 0.0

    @given(st.integers(0, 10), st.floats(0.01, 10.0), st.integers(1, 60))
    @settings(max_examples=200, deadline=None)
    def test_in_unit_interval_and_nonincreasing(self, d1, d2, k):
        s = DecaySchedule(d1, d2)
        v = decay(s, k)
        assert 0.0 <= v <= 1.0
        assert decay(s, k + 1) <= v + 1e-15
        assert decay(s, s.window_end + 1) == 0.0


class TestTafMWeights:
    def test_zero_variance_model_gets_weight_one(self, rng):
        confident = _StubGP(lambda x: np.zeros(len(x)), var_fn=lambda x: np.zeros(len(x)))
        vague = _StubGP(lambda x: np.zeros(len(x)), var_fn=lambda x: np.ones(len(x)))
        gallery = PopulationGallery(models=(confident, vague))
        w = taf_m_weights(gallery, rng.uniform(size=(25, 2)))
        assert w[0] == 1.0
        assert w[1] < 1.0

    def test_identical_variances_equal_weights(self, rng):
        models = tuple(
            _StubGP(lambda x: np.zeros(len(x)), var_fn=lambda x: np.full(len(x), 0.4)) for _ in range(3)
        )
        w = taf_m_weights(PopulationGallery(models=models), rng.uniform(size=(10, 2)))
        assert np.allclose(w, 1.0)

    def test_weight_ratio_matches_formula(self, rng):
        # mean variances 0.1 and 1.0 -> raw weights 1/1.1 and 1/2.
        m1 = _StubGP(lambda x: np.zeros(len(x)), var_fn=lambda x: np.full(len(x), 0.1))
        m2 = _StubGP(lambda x: np.zeros(len(x)), var_fn=lambda x: np.full(len(x), 1.0))
        gallery = PopulationGallery(models=(m1, m2))
        w = taf_m_weights(gallery, rng.uniform(size=(25, 2)))
        assert w[0] / w[1] == pytest.approx((1 / 1.1) / (1 / 2.0), rel=1e-12)
        assert w[0] / w[1] == pytest.approx(1.818, abs=1e-3)

    def test_probes_required(self):
        with pytest.raises(InvalidInputError):
            taf_m_weights(PopulationGallery(models=()), np.empty((0, 2)))


class TestTafRWeights:
    def _setup(self):
        ds = make_dataset(
            [([0.2, 0.2], [[0.8, 0.8], [0.6, 0.4]]), ([0.3, 0.2], [[0.2, 0.2], [0.9, 0.1]])],
            dimension=2,
        )
        current = make_gp([[0.2, 0.2], [0.8, 0.8], [0.6, 0.4], [0.3, 0.2], [0.9, 0.1]], [1.0, -1.0, 0.1, 1.2, -0.4])
        return ds, current

    def test_identical_model_full_concordance(self):
        ds, current = self._setup()
        gallery = PopulationGallery(models=(current,))
        assert taf_r_weights(gallery, current, ds)[0] == 1.0

    def test_negated_model_zero_concordance(self):
        ds, current = self._setup()
        negated = _StubGP(lambda x, c=current: -c.predict_mean(x))
        gallery = PopulationGallery(models=(negated,))
        assert taf_r_weights(gallery, current, ds)[0] == 0.0

    def test_counting_three_of_four(self):
        # 4 pairs; a model agreeing on 3 gets weight 0.75.
        ds, current = self._setup()

        def almost(x):
            base = current.predict_mean(x)
            flip = np.all(np.isclose(x, [0.6, 0.4]), axis=1)
            return np.where(flip, 2.0, base)

        current_means = current  # noqa: F841  (clarity)
        gallery = PopulationGallery(models=(_StubGP(almost),))
        assert taf_r_weights(gallery, current, ds)[0] == pytest.approx(0.75, abs=0)

    def test_empty_dataset_uniform(self):
        _, current = self._setup()
        gallery = PopulationGallery(models=(current, current))
        w = taf_r_weights(gallery, None, make_dataset([], 2))
        assert np.array_equal(w, np.ones(2))

    def test_permutation_equivariance(self, rng):
        ds, current = self._setup()
        models = tuple(
            make_gp(rng.uniform(size=(4, 2)), rng.normal(size=4)) for _ in range(3)
        )
        w = taf_r_weights(PopulationGallery(models=models), current, ds)
        w_perm = taf_r_weights(PopulationGallery(models=models[::-1]), current, ds)
        assert np.array_equal(w[::-1], w_perm)
        assert np.all((w >= 0.0) & (w <= 1.0))


def _simple_ctx(**overrides):
    current = make_gp([[0.2, 0.2], [0.8, 0.8]], [1.0, -1.0])
    defaults = dict(
        current_model=current,
        gallery=None,
        schedule=DecaySchedule(5, 0.1),
        iteration=20,
        best_observed=(np.array([0.2, 0.2]), current.predict_mean(np.array([0.2, 0.2]))),
        variant="taf_r",
        dataset=make_dataset([([0.2, 0.2], [[0.8, 0.8]])], dimension=2),
    )
    defaults.update(overrides)
    return AcquisitionContext(**defaults)


class TestTafAcquisition:
    def test_full_handoff_equals_ei_exactly(self, rng):
        gallery = PopulationGallery(models=(make_gp([[0.5, 0.5]], [1.0]),))
        ctx = _simple_ctx(gallery=gallery, iteration=16)  # past d1 + 1/d2
        pts = rng.uniform(size=(40, 2))
        ei = expected_improvement(ctx.current_model, pts, ctx.best_observed[1], fast=True)
        np.testing.assert_array_equal(taf_acquisition(ctx, pts), ei)

    def test_single_model_passthrough_at_cold_start(self, rng):
        model = make_gp([[0.5, 0.5], [0.1, 0.1]], [1.0, -0.5])
        gallery = PopulationGallery(models=(model,))
        ctx = _simple_ctx(
            current_model=None,
            best_observed=None,
            gallery=gallery,
            iteration=1,
            dataset=make_dataset([], 2),
        )
        pts = rng.uniform(size=(30, 2))
        baseline = model._train_means.min()
        expected = np.maximum(0.0, model.predict_mean(pts, fast=True) - baseline)
        np.testing.assert_allclose(taf_acquisition(ctx, pts), expected, rtol=1e-12)

    def test_hand_computed_weighted_sum(self):
        # d(k)=0.5 at k=10 (d1=5, d2=0.1); w=(1, 0); hand-set means.
        m1 = _StubGP(lambda x: np.full(len(x), 2.0), train_means=(0.5,))
        m2 = _StubGP(lambda x: np.full(len(x), 9.0), train_means=(0.0,))
        current = _StubGP(lambda x: np.full(len(x), 1.2), var_fn=lambda x: np.zeros(len(x)))
        gallery = PopulationGallery(models=(m1, m2), weights=np.array([1.0, 0.0]))
        ctx = _simple_ctx(
            current_model=current,
            gallery=gallery,
            iteration=10,
            best_observed=(np.array([0.2, 0.2]), 1.0),
            dataset=make_dataset([], 2),
        )
        # population baselines: train-mean minimum (no observations in ctx dataset)
        # term: 0.5*w1*max(0, 2.0-0.5) = 0.75; EI term: 0.5*max(0,1.2-1.0)=0.1
        value = taf_acquisition(ctx, np.array([0.4, 0.4]))
        assert value == pytest.approx(0.5 * 1.5 + 0.5 * 0.2, rel=1e-12)

    def test_additive_shift_of_predictions_and_incumbent_is_invariant(self, rng):
        base = make_gp([[0.5, 0.5], [0.2, 0.8]], [0.7, -0.2])
        shifted = _StubGP(lambda x, b=base: b.predict_mean(x) + 123.0)
        ds = make_dataset([([0.2, 0.2], [[0.8, 0.8]])], dimension=2)
        pts = rng.uniform(size=(25, 2))

        def value_for(model):
            gallery = PopulationGallery(models=(model,), weights=np.array([0.8]))
            ctx = _simple_ctx(gallery=gallery, iteration=8, dataset=ds)
            return taf_acquisition(ctx, pts)

        np.testing.assert_allclose(value_for(base), value_for(shifted), atol=1e-9)

    def test_requires_model_or_gallery(self):
        with pytest.raises(InvalidStateError):
            ctx = _simple_ctx(current_model=None, best_observed=None, gallery=None, iteration=1)
            taf_acquisition(ctx, np.array([0.5, 0.5]))

    def test_argmax_matches_ei_argmax_past_window(self, rng):
        gallery = PopulationGallery(models=(make_gp([[0.5, 0.5]], [1.0]),))
        ctx = _simple_ctx(gallery=gallery, iteration=30)
        grid = rng.uniform(size=(10_000, 2))
        taf_vals = taf_acquisition(ctx, grid)
        ei_vals = expected_improvement(ctx.current_model, grid, ctx.best_observed[1], fast=True)
        assert int(np.argmax(taf_vals)) == int(np.argmax(ei_vals))


class TestMaximizer:
    def test_recovers_quadratic_peak(self):
        def objective(x):
            return -np.sum((np.atleast_2d(x) - 0.5) ** 2, axis=1)

        best = maximize_acquisition(objective, 3, seed=0)
        assert np.all(np.abs(best - 0.5) < 0.02)

    def test_constant_objective_returns_first_start(self):
        def objective(x):
            return np.zeros(len(np.atleast_2d(x)))

        from prefopt._seeding import rng_for

        best = maximize_acquisition(objective, 4, seed=9)
        first = rng_for(9, "maximizer").uniform(size=(80, 4))[0]
        np.testing.assert_array_equal(best, first)

    def test_deterministic(self):
        def objective(x):
            x = np.atleast_2d(x)
            return np.sin(5 * x[:, 0]) + np.cos(3 * x[:, 1])

        a = maximize_acquisition(objective, 2, seed=123)
        b = maximize_acquisition(objective, 2, seed=123)
        np.testing.assert_array_equal(a, b)

    def test_stays_in_cube(self, rng):
        def objective(x):
            x = np.atleast_2d(x)
            return x[:, 0] + x[:, 1]  # pushes to the (1,1) corner

        best = maximize_acquisition(objective, 2, seed=4)
        assert np.all(best >= 0.0) and np.all(best <= 1.0)
        assert best[0] > 0.99 and best[1] > 0.99

    def test_small_budget_options(self):
        def objective(x):
            return -np.sum((np.atleast_2d(x) - 0.4) ** 2, axis=1)

        best = maximize_acquisition(
            objective, 2, seed=1, options=MaximizerOptions(starts=8, iters=40, cull=((4, 2),))
        )
        assert np.all(np.abs(best - 0.4) < 0.05)


class TestTwoStep:
    def _ctx(self):
        ds = make_dataset(
            [([0.3, 0.3], [[0.8, 0.8], [0.1, 0.6]])],
            dimension=2,
        )
        from prefopt.preference import fit_preference_gp

        current = fit_preference_gp(ds, seed=2)
        return _simple_ctx(
            current_model=current,
            gallery=None,
            variant="ei",
            iteration=2,
            dataset=ds,
            best_observed=(np.array([0.3, 0.3]), current.predict_mean(np.array([0.3, 0.3]))),
        )

    def test_empty_previous_plane_returns_base(self, rng):
        ctx = self._ctx()
        base = acquisition_objective(ctx)
        lookahead = two_step_acquisition(ctx, np.array([0.6, 0.6]), [], seed=0)
        assert lookahead.status == "unaugmented"
        pts = rng.uniform(size=(10, 2))
        np.testing.assert_array_equal(lookahead(pts), base(pts))

    def test_augmentation_raises_mean_at_x1(self):
        ctx = self._ctx()
        x1 = np.array([0.6, 0.6])
        previous = [np.array([0.3, 0.3]), np.array([0.8, 0.8]), np.array([0.1, 0.6])]
        before = ctx.current_model.predict_mean(x1)
        lookahead = two_step_acquisition(ctx, x1, previous, seed=0)
        assert lookahead.status == "augmented"
        after = lookahead.context.current_model.predict_mean(x1)
        assert after > before

    def test_mc_with_forced_winner_matches_augment(self, rng):
        # The x1 point has by far the highest posterior mean and the model
        # variance at the probe set is negligible, so every Monte Carlo
        # sample picks x1 and the averaged acquisition equals augment mode.
        ds = make_dataset([([0.3, 0.3], [[0.8, 0.8]])], dimension=2)
        from prefopt.preference import fit_preference_gp

        current = fit_preference_gp(ds, seed=2)
        ctx = _simple_ctx(
            current_model=current,
            gallery=None,
            variant="ei",
            iteration=2,
            dataset=ds,
            best_observed=(np.array([0.3, 0.3]), current.predict_mean(np.array([0.3, 0.3]))),
        )
        x1 = np.array([0.3, 0.3005])  # glued to observed data: tiny variance, high mean
        previous = [np.array([0.8, 0.8]), np.array([0.8, 0.7995])]
        aug = two_step_acquisition(ctx, x1, previous, seed=5, mode="augment")
        mc = two_step_acquisition(ctx, x1, previous, seed=5, mode="mc", mc_samples=10)
        pts = rng.uniform(size=(20, 2))
        np.testing.assert_allclose(mc(pts), aug(pts), atol=1e-6)
