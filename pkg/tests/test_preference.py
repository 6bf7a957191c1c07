import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefopt.errors import InvalidInputError
from prefopt.preference import (
    FitOptions,
    PreferenceDataset,
    SelectionEvent,
    btl_choice_probability,
    fit_preference_gp,
)
from conftest import make_dataset


class TestBtlChoiceProbability:
    def test_symmetric_pair_is_half(self):
        assert btl_choice_probability([0.0, 0.0], 0) == pytest.approx(0.5, abs=0)

    def test_unit_gap(self):
        assert btl_choice_probability([1.0, 0.0], 0) == pytest.approx(math.e / (math.e + 1.0), rel=1e-12)
        assert btl_choice_probability([1.0, 0.0], 0) == pytest.approx(0.73106, abs=5e-6)

    def test_uniform_five_way(self):
        g = [5.0] * 5
        probs = [btl_choice_probability(g, i) for i in range(5)]
        assert probs == pytest.approx([0.2] * 5, abs=1e-15)
        assert sum(probs) == pytest.approx(1.0, abs=1e-12)

    def test_stable_for_large_values(self):
        p = btl_choice_probability([1000.0, 999.0], 0)
        assert p == pytest.approx(math.e / (math.e + 1.0), rel=1e-12)

    def test_requires_two_candidates(self):
        with pytest.raises(InvalidInputError):
            btl_choice_probability([1.0], 0)
        with pytest.raises(InvalidInputError):
            btl_choice_probability([1.0, 2.0], 5)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=30))
    @settings(max_examples=200, deadline=None)
    def test_probabilities_sum_to_one(self, goodness):
        total = sum(btl_choice_probability(goodness, i) for i in range(len(goodness)))
        assert abs(total - 1.0) < 1e-12


class TestSelectionEvent:
    def test_chosen_must_not_be_rejected(self):
        with pytest.raises(InvalidInputError):
            SelectionEvent(
                chosen=np.array([0.5, 0.5]),
                rejected=np.array([[0.2, 0.2], [0.5, 0.5]]),
                iteration_index=1,
            )

    def test_points_must_be_in_cube(self):
        with pytest.raises(InvalidInputError):
            SelectionEvent(chosen=np.array([1.2, 0.5]), rejected=np.array([[0.2, 0.2]]), iteration_index=1)

    def test_rejected_must_be_nonempty(self):
        with pytest.raises(InvalidInputError):
            SelectionEvent(chosen=np.array([0.5]), rejected=np.empty((0, 1)), iteration_index=1)

    def test_iteration_indices_strictly_increase(self):
        ev = SelectionEvent(chosen=np.array([0.1, 0.1]), rejected=np.array([[0.9, 0.9]]), iteration_index=2)
        with pytest.raises(InvalidInputError):
            PreferenceDataset(events=(ev, ev), dimension=2)

    def test_append_is_a_new_value(self):
        ds = PreferenceDataset.empty(2)
        ev = SelectionEvent(chosen=np.array([0.1, 0.1]), rejected=np.array([[0.9, 0.9]]), iteration_index=1)
        ds2 = ds.append(ev)
        assert len(ds) == 0 and len(ds2) == 1


class TestFit:
    def test_single_event_orders_latents(self):
        ds = make_dataset([([0.2, 0.3], [[0.8, 0.7]])], dimension=2)
        gp = fit_preference_gp(ds, seed=0)
        chosen_mean = gp.predict_mean(np.array([0.2, 0.3]))
        rejected_mean = gp.predict_mean(np.array([0.8, 0.7]))
        assert chosen_mean > rejected_mean
        assert gp.fit_status == "ok"

    def test_same_seed_bitwise_identical(self):
        ds = make_dataset(
            [([0.2, 0.3], [[0.8, 0.7], [0.5, 0.1]]), ([0.25, 0.35], [[0.2, 0.3], [0.9, 0.9]])],
            dimension=2,
        )
        a = fit_preference_gp(ds, seed=7)
        b = fit_preference_gp(ds, seed=7)
        assert a.hyperparams.signal_variance == b.hyperparams.signal_variance
        assert np.array_equal(a.hyperparams.length_scales, b.hyperparams.length_scales)
        assert np.array_equal(a.latent.values, b.latent.values)

    def test_rejected_storage_order_does_not_matter(self):
        rejected = [[0.8, 0.7], [0.5, 0.1], [0.9, 0.2]]
        ds_fwd = make_dataset([([0.2, 0.3], rejected)], dimension=2)
        ds_rev = make_dataset([([0.2, 0.3], rejected[::-1])], dimension=2)
        a = fit_preference_gp(ds_fwd, seed=3)
        b = fit_preference_gp(ds_rev, seed=3)
        assert np.array_equal(a.latent.values, b.latent.values)
        assert np.array_equal(a.observed_points, b.observed_points)
        assert a.hyperparams.signal_variance == b.hyperparams.signal_variance

    def test_duplicate_event_never_shrinks_preference_gap(self):
        events = [([0.2, 0.3], [[0.8, 0.7], [0.6, 0.9]])]
        ds1 = make_dataset(events, dimension=2)
        ds2 = make_dataset(events + events, dimension=2)

        def min_gap(gp):
            chosen = gp.predict_mean(np.array([0.2, 0.3]))
            return min(chosen - gp.predict_mean(np.array(r)) for r in events[0][1])

        assert min_gap(fit_preference_gp(ds2, seed=1)) >= min_gap(fit_preference_gp(ds1, seed=1)) - 1e-8

    def test_one_dim_synthetic_user_recovers_optimum(self):
        # Oracle: dense 1001-point grid argmax of the fitted posterior mean.
        # Events simulate ten 25-candidate galleries judged by f(x) = -(x-0.6)^2.
        rng = np.random.default_rng(5)
        events = []
        for _ in range(10):
            candidates = rng.uniform(size=(25, 1))
            values = -((candidates[:, 0] - 0.6) ** 2)
            winner = int(np.argmax(values))
            chosen = candidates[winner]
            rejected = np.delete(candidates, winner, axis=0)
            events.append((chosen, rejected))
        ds = make_dataset(events, dimension=1)
        gp = fit_preference_gp(ds, seed=11)
        grid = np.linspace(0.0, 1.0, 1001)[:, None]
        argmax = grid[np.argmax(gp.predict_mean(grid)), 0]
        assert abs(argmax - 0.6) < 0.1

    def test_fit_requires_events(self):
        with pytest.raises(InvalidInputError):
            fit_preference_gp(PreferenceDataset.empty(2), seed=0)

    def test_warm_start_converges_same_region(self):
        ds = make_dataset(
            [([0.2, 0.3], [[0.8, 0.7], [0.5, 0.1]]), ([0.25, 0.35], [[0.2, 0.3], [0.9, 0.9]])],
            dimension=2,
        )
        cold = fit_preference_gp(ds, seed=7)
        prefix = PreferenceDataset(events=ds.events[:1], dimension=2)
        warm_base = fit_preference_gp(prefix, seed=7)
        warm = fit_preference_gp(ds, seed=7, options=FitOptions(restarts=1), warm=warm_base)
        probe = np.array([[0.3, 0.3], [0.7, 0.6]])
        np.testing.assert_allclose(warm.predict_mean(probe), cold.predict_mean(probe), atol=0.3)
