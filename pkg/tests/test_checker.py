import math

import numpy as np
import pytest

import uctmc
from uctmc import (
    CheckerError,
    ConcreteCtmc,
    IntervalReach,
    InstantReward,
    MeasureSet,
    TimeBoundedReach,
    bound_measures,
    build_full,
    evaluate_measures,
    instant_reward,
    interval_reach,
    reach_probabilities,
    reach_probability,
    refine_solution,
    region_to_curve,
    solve_measure_set,
    solve_measures,
    transient_distribution,
)
from uctmc.scenario import BoxRegion

from oracles import interval_reach_oracle, random_ctmc, transient_oracle


def two_state(lam=1.0):
    return ConcreteCtmc.from_dense(
        [[0.0, lam], [0.0, 0.0]], [1.0, 0.0],
        labels={"goal": [False, True], "start": [True, False]},
        rewards={"r": [0.0, 1.0], "one": [1.0, 1.0]})


def test_two_state_transient():
    c = two_state()
    pi = transient_distribution(c, 1.0)
    assert pi[1] == pytest.approx(1 - math.exp(-1), abs=1e-6)


def test_transient_at_zero_is_initial():
    c = two_state()
    assert np.array_equal(transient_distribution(c, 0.0), c.initial)


def test_epsilon_floor():
    with pytest.raises(CheckerError):
        transient_distribution(two_state(), 1.0, epsilon=1e-13)


def test_birth_chain_matches_expm_oracle():
    c = ConcreteCtmc.from_dense(
        [[0.0, 2.0, 0.0], [0.0, 0.0, 3.0], [0.0, 0.0, 0.0]],
        [1.0, 0.0, 0.0])
    pi = transient_distribution(c, 0.7, epsilon=1e-8)
    ref = transient_oracle(c, 0.7)
    assert np.max(np.abs(pi - ref)) < 1e-8


def test_random_ctmcs_match_expm_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(25):
        c = random_ctmc(rng)
        t = float(rng.uniform(0.0, 4.0))
        pi = transient_distribution(c, t, epsilon=1e-7)
        ref = transient_oracle(c, t)
        assert np.abs(pi - ref).sum() < 2e-7


def test_reach_examples():
    c = two_state()
    assert reach_probability(c, "start", 5.0) == pytest.approx(1.0)
    assert reach_probability(c, "goal", 2.0) == pytest.approx(1 - math.exp(-2), abs=1e-6)
    unreachable = ConcreteCtmc.from_dense(
        [[0.0, 1.0], [0.0, 0.0]], [0.0, 1.0], labels={"zero": [True, False]})
    assert reach_probability(unreachable, "zero", 10.0) == 0.0


def test_reach_is_monotone_in_horizon():
    c = two_state(0.7)
    taus = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
    probs = reach_probabilities(c, "goal", taus)
    assert np.all(np.diff(probs) >= -1e-12)


def test_multi_horizon_matches_single_calls():
    rng = np.random.default_rng(5)
    c = random_ctmc(rng)
    taus = [0.3, 0.9, 2.7]
    batch = reach_probabilities(c, "goal", taus)
    single = [reach_probability(c, "goal", t) for t in taus]
    assert np.allclose(batch, single, atol=1e-9)


def test_interval_reach_zero_length_window_at_zero():
    c = ConcreteCtmc.from_dense(
        [[0.0, 1.0], [0.0, 0.0]], [0.3, 0.7], labels={"goal": [False, True]})
    assert interval_reach(c, "goal", 0.0, 0.0) == pytest.approx(0.7)


def test_interval_reach_zero_start_equals_reach():
    c = two_state()
    assert interval_reach(c, "goal", 0.0, 1.5) == pytest.approx(
        reach_probability(c, "goal", 1.5), abs=2e-6)


def test_interval_reach_sir2_matches_dense_oracle(sir2, mean_valuation):
    c = build_full(sir2, mean_valuation)
    mask = c.label_mask("extinct")
    ours = interval_reach(c, "extinct", 1.0, 2.0, epsilon=1e-8)
    ref = interval_reach_oracle(c, mask, 1.0, 2.0)
    assert ours == pytest.approx(ref, abs=1e-6)


def test_interval_reach_random_vs_oracle():
    rng = np.random.default_rng(31)
    for _ in range(20):
        c = random_ctmc(rng)
        t1 = float(rng.uniform(0.0, 1.5))
        t2 = t1 + float(rng.uniform(0.0, 2.0))
        ours = interval_reach(c, "goal", t1, t2, epsilon=1e-8)
        ref = interval_reach_oracle(c, c.label_mask("goal"), t1, t2)
        assert ours == pytest.approx(ref, abs=1e-6)


def test_instant_reward_examples():
    c = two_state()
    assert instant_reward(c, "r", 0.0) == 0.0
    assert instant_reward(c, "one", 3.7) == pytest.approx(1.0, abs=1e-9)
    assert instant_reward(c, "r", 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-6)


# ---------------------------------------------------------------------------
# Measure sets
# ---------------------------------------------------------------------------

def test_solve_measures_two_state_formula(sir2):
    c = two_state(0.9)
    measures = MeasureSet((TimeBoundedReach("m1", "goal", 2.5),))
    values = evaluate_measures(c, measures)
    assert values[0] == pytest.approx(1 - math.exp(-0.9 * 2.5), abs=1e-6)


def test_solve_measures_empty_set(sir2, mean_valuation):
    sol = solve_measures(sir2, mean_valuation, MeasureSet(()))
    assert sol.values.shape == (0,)


def test_measure_ids_must_be_unique():
    with pytest.raises(CheckerError):
        MeasureSet((TimeBoundedReach("m", "goal", 1.0),
                    TimeBoundedReach("m", "goal", 2.0)))


def test_sir20_horizon_family_is_monotone(sir20, sir_measures, mean_valuation):
    sol = solve_measures(sir20, mean_valuation, sir_measures)
    assert np.all(np.diff(sol.values) >= -1e-9)
    assert np.all((sol.values >= 0) & (sol.values <= 1))


def test_solve_measure_set_thread_invariance(sir20, sir_measures):
    samples = uctmc.sample_valuations(sir20, 6, seed=11)
    serial = solve_measure_set(sir20, samples, sir_measures, threads=1)
    pooled = solve_measure_set(sir20, samples, sir_measures, threads=3)
    for a, b in zip(serial, pooled):
        assert np.array_equal(a.values, b.values)


# ---------------------------------------------------------------------------
# Interval solutions from partial models
# ---------------------------------------------------------------------------

def test_bound_measures_sandwich_sir2(sir2, mean_valuation):
    measures = MeasureSet((
        TimeBoundedReach("a", "extinct", 30.0),
        IntervalReach("b", "extinct", 5.0, 40.0),
        InstantReward("c", "infected", 10.0),
    ))
    exact = solve_measures(sir2, mean_valuation, measures).values
    iv = bound_measures(sir2, mean_valuation, measures, delta=0.5, rel_gap=1e-3)
    assert np.all(iv.lower <= exact + 1e-9)
    assert np.all(exact <= iv.upper + 1e-9)


def test_bound_measures_delta_one_gives_vacuous_reach_bounds(sir20, sir_measures,
                                                             mean_valuation):
    from uctmc.checker import _bound_at_delta
    lower, upper, partial = _bound_at_delta(sir20, mean_valuation, sir_measures,
                                            1.0, 1e-6)
    assert partial.retained_states == ((15, 5, 0),)
    assert np.all(lower <= 1e-6)
    assert np.all(upper >= 1.0 - 1e-6)


def test_bound_measures_tiny_delta_is_exact(sir2, mean_valuation):
    measures = MeasureSet((TimeBoundedReach("a", "extinct", 30.0),))
    exact = solve_measures(sir2, mean_valuation, measures).values
    iv = bound_measures(sir2, mean_valuation, measures, delta=1e-100, rel_gap=1.0)
    assert iv.upper[0] - iv.lower[0] <= 1e-9
    assert iv.lower[0] == pytest.approx(exact[0], abs=1e-6)


def test_bound_measures_meets_rel_gap(sir20, sir_measures, mean_valuation):
    iv = bound_measures(sir20, mean_valuation, sir_measures, delta=1e-2, rel_gap=1e-2)
    assert iv.gap_met
    rel = (iv.upper - iv.lower) / np.maximum(iv.upper, 1e-12)
    assert np.all(rel <= 1e-2 + 1e-12)


def test_refine_solution_shrinks_and_contains(sir20, sir_measures, mean_valuation):
    coarse = bound_measures(sir20, mean_valuation, sir_measures, delta=0.3, rel_gap=1.0)
    refined = refine_solution(coarse, sir20, mean_valuation, sir_measures)
    assert np.all(refined.lower >= coarse.lower - 1e-12)
    assert np.all(refined.upper <= coarse.upper + 1e-12)
    assert refined.delta == pytest.approx(coarse.delta / 10.0)
    # repeated refinement: widths decrease monotonically toward zero
    widths = [float(np.max(coarse.width))]
    current = coarse
    for _ in range(6):
        current = refine_solution(current, sir20, mean_valuation, sir_measures)
        widths.append(float(np.max(current.width)))
    assert all(a >= b - 1e-12 for a, b in zip(widths, widths[1:]))
    assert widths[-1] < 1e-3


def test_refine_exact_interval_unchanged(sir2, mean_valuation):
    measures = MeasureSet((TimeBoundedReach("a", "extinct", 30.0),))
    exact_iv = bound_measures(sir2, mean_valuation, measures, delta=1e-100, rel_gap=1.0)
    refined = refine_solution(exact_iv, sir2, mean_valuation, measures)
    assert np.allclose(refined.lower, exact_iv.lower, atol=1e-12)
    assert np.allclose(refined.upper, exact_iv.upper, atol=1e-12)


def test_cluster_reuse_stays_sound(sir20, sir_measures):
    samples = uctmc.sample_valuations(sir20, 8, seed=21)
    intervals = solve_measure_set(sir20, samples, sir_measures, mode="approx",
                                  delta=1e-2, rel_gap=1e-2, cluster_radius=1.0)
    exact = solve_measure_set(sir20, samples, sir_measures, mode="exact")
    for iv, sol in zip(intervals, exact):
        assert np.all(iv.lower <= sol.values + 1e-9)
        assert np.all(sol.values <= iv.upper + 1e-9)


# ---------------------------------------------------------------------------
# Curve bands
# ---------------------------------------------------------------------------

def _region(lower, upper):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return BoxRegion(lower, upper, np.zeros(1, dtype=np.int8))


def test_curve_single_horizon_constant_band():
    measures = MeasureSet((TimeBoundedReach("a", "goal", 5.0),))
    band = region_to_curve(_region([0.3], [0.6]), measures)
    assert band.evaluate(5.0) == (0.3, 0.6)


def test_curve_two_point_step_example():
    measures = MeasureSet((TimeBoundedReach("a", "goal", 1.0),
                           TimeBoundedReach("b", "goal", 2.0)))
    band = region_to_curve(_region([0.2, 0.3], [0.4, 0.5]), measures)
    assert band.evaluate(1.0) == (0.2, 0.4)
    assert band.evaluate(2.0) == (0.3, 0.5)
    lo, hi = band.evaluate(1.5)
    assert (lo, hi) == (0.2, 0.5)  # carry lower forward, upper backward


def test_curve_rejects_mixed_family(sir_measures):
    mixed = MeasureSet((TimeBoundedReach("a", "goal", 1.0),
                        InstantReward("b", "r", 1.0)))
    with pytest.raises(CheckerError):
        region_to_curve(_region([0.1, 0.1], [0.2, 0.2]), mixed)


def test_curve_band_contains_sir20_boxes(sir20, sir_measures):
    samples = uctmc.sample_valuations(sir20, 20, seed=4)
    solutions = solve_measure_set(sir20, samples, sir_measures)
    from uctmc.scenario import solve_box_precise, solutions_matrix
    region, _ = solve_box_precise(solutions_matrix(solutions), 2.0)
    band = region_to_curve(region, sir_measures)
    assert np.all(np.diff(band.lower) >= -1e-12)
    assert np.all(np.diff(band.upper) >= -1e-12)
    # on monotone data the envelopes coincide with the boxes at grid points
    assert np.allclose(band.lower, np.clip(region.lower, 0, 1), atol=1e-12)
    assert np.allclose(band.upper, np.clip(region.upper, 0, 1), atol=1e-12)


def test_unknown_label_or_reward_errors():
    from uctmc import ModelError

    c = two_state()
    with pytest.raises(ModelError, match="unknown label"):
        reach_probability(c, "nope", 1.0)
    with pytest.raises(ModelError, match="unknown reward"):
        instant_reward(c, "nope", 1.0)


def test_measure_preconditions():
    with pytest.raises(CheckerError):
        TimeBoundedReach("m", "goal", -1.0)
    with pytest.raises(CheckerError):
        IntervalReach("m", "goal", 2.0, 1.0)
    with pytest.raises(CheckerError):
        InstantReward("m", "r", -0.5)
