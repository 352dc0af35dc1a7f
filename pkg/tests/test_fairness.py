import numpy as np
import pytest
from hypothesis import given, strategies as st

from fairrl import fairness
from fairrl.errors import ContractError
from fairrl.fairness import (
    CohortWindow,
    PiecewiseLinear,
    ThresholdSchedule,
    massage_action,
    regularizer,
    schedule_threshold,
    total_variation,
    wasserstein_1d,
)

from oracles import ot_cost, ot_cost_exhaustive, random_model

seeds = st.integers(0, 2**32 - 1)


def random_pair(rng, n):
    return rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))


# -- Wasserstein -------------------------------------------------------------

class TestWasserstein:
    def test_identity(self):
        p = np.array([0.2, 0.3, 0.5])
        assert wasserstein_1d(p, p) == 0.0

    def test_point_mass_translation(self):
        assert wasserstein_1d([1, 0, 0], [0, 0, 1], [1, 2, 3]) == pytest.approx(2.0, abs=1e-12)

    def test_two_point_support(self):
        assert wasserstein_1d([0.5, 0.5], [1.0, 0.0], [0, 1]) == pytest.approx(0.5, abs=1e-12)

    @given(seeds, st.integers(1, 4))
    def test_matches_transport_vertices(self, seed, n):
        rng = np.random.default_rng(seed)
        p, q = random_pair(rng, n)
        support = np.cumsum(rng.random(n) + 0.05)
        assert wasserstein_1d(p, q, support) == pytest.approx(ot_cost_exhaustive(p, q, support), abs=1e-9)

    @given(seeds, st.integers(2, 8))
    def test_matches_transport_lp(self, seed, n):
        rng = np.random.default_rng(seed)
        p, q = random_pair(rng, n)
        support = np.cumsum(rng.random(n) + 0.05)
        assert wasserstein_1d(p, q, support) == pytest.approx(ot_cost(p, q, support), abs=1e-9)

    @given(seeds, st.integers(1, 12))
    def test_metric_axioms(self, seed, n):
        rng = np.random.default_rng(seed)
        p, q = random_pair(rng, n)
        r = rng.dirichlet(np.ones(n))
        support = np.cumsum(rng.random(n) + 0.05)
        d = lambda a, b: wasserstein_1d(a, b, support)  # noqa: E731
        assert d(p, p) == 0.0
        assert d(p, q) == d(q, p)
        assert d(p, r) <= d(p, q) + d(q, r) + 1e-9
        if not np.allclose(p, q):
            assert d(p, q) > 0

    @pytest.mark.parametrize("p,q,support", [
        ([0.5, 0.5], [1.0], None),
        ([0.5, 0.6], [0.5, 0.5], None),
        ([-0.1, 1.1], [0.5, 0.5], None),
        ([0.5, 0.5], [0.5, 0.5], [1, 1]),
        ([0.5, 0.5], [0.5, 0.5], [0, 1, 2]),
    ])
    def test_contract_errors(self, p, q, support):
        with pytest.raises(ContractError):
            wasserstein_1d(p, q, support)

    def test_total_variation(self):
        assert total_variation([1, 0, 0], [0, 0, 1]) == 1.0
        assert total_variation([0.5, 0.5, 0], [0.5, 0, 0.5]) == pytest.approx(0.5)

    @given(seeds)
    def test_total_variation_is_01_transport(self, seed):
        # 0/1 ground metric: any distinct points are distance 1 apart
        rng = np.random.default_rng(seed)
        p, q = random_pair(rng, 3)
        assert total_variation(p, q) == pytest.approx(0.5 * np.abs(p - q).sum())
        # on a 2-point support W1 with unit spacing is the same thing
        p2, q2 = random_pair(rng, 2)
        assert total_variation(p2, q2) == pytest.approx(wasserstein_1d(p2, q2), abs=1e-12)


# -- cohort window -------------------------------------------------------------

class TestCohortWindow:
    @given(seeds, st.integers(1, 12), st.integers(0, 60))
    def test_totals_match_recomputation(self, seed, capacity, pushes):
        rng = np.random.default_rng(seed)
        w = CohortWindow(capacity, 3)
        history = []
        for _ in range(pushes):
            rec = rng.integers(0, 5, size=3)
            expected_with = np.sum(history[-(capacity - 1):] + [rec], axis=0) if capacity > 1 else rec
            assert np.array_equal(w.totals_with(rec), expected_with)
            w.push(rec)
            history.append(rec)
            assert len(w) == min(len(history), capacity)
            assert np.array_equal(w.totals, np.sum(history[-capacity:], axis=0))
            assert np.array_equal(w.records(), np.array(history[-capacity:]))

    def test_evicts_oldest_first(self):
        w = CohortWindow(2, 1)
        for v in (1, 2, 3):
            w.push([v])
        assert w.records().ravel().tolist() == [2, 3]
        assert w.oldest()[0] == 2

    def test_totals_with_does_not_mutate(self):
        w = CohortWindow(2, 2)
        w.push([1, 1])
        w.totals_with([5, 5])
        assert w.totals.tolist() == [1, 1] and len(w) == 1

    def test_bad_width(self):
        with pytest.raises(ContractError):
            CohortWindow(3, 2).push([1, 2, 3])

    def test_clear(self):
        w = CohortWindow(3, 1)
        w.push([4])
        w.clear()
        assert len(w) == 0 and w.totals[0] == 0


# -- massaging ---------------------------------------------------------------

class TestMassage:
    def test_zero_threshold(self):
        assert massage_action([0.5, 0.5], 0, lambda a: [1.0, 0.0][a], 0.0) == 0

    def test_close_confidence_flips(self):
        assert massage_action([0.55, 0.45], 0, lambda a: [0.3, 0.1][a], 0.2) == 1

    def test_far_confidence_blocks(self):
        assert massage_action([0.9, 0.1], 0, lambda a: [0.3, 0.1][a], 0.2) == 0

    def test_equal_bias_keeps_sampled(self):
        assert massage_action([0.5, 0.5], 1, lambda a: 0.2, 0.5) == 1

    def test_lowest_id_among_equally_fair(self):
        bias = [0.5, 0.5, 0.1, 0.1]
        assert massage_action([0.25, 0.25, 0.25, 0.25], 0, lambda a: bias[a], 0.1) == 2

    def test_picks_fairest_feasible(self):
        bias = [0.4, 0.3, 0.0, 0.2]
        # action 2 is fairest but outside the confidence band
        assert massage_action([0.3, 0.35, 0.05, 0.3], 0, lambda a: bias[a], 0.1) == 3

    @given(seeds, st.integers(2, 6), st.floats(0, 1))
    def test_output_respects_constraint(self, seed, k, tau):
        rng = np.random.default_rng(seed)
        probs = rng.dirichlet(np.ones(k))
        bias = rng.random(k)
        sampled = int(rng.integers(k))
        out = massage_action(probs, sampled, lambda a: bias[a], tau)
        assert out == sampled or abs(probs[out] - probs[sampled]) < tau
        feasible = [a for a in range(k) if a == sampled or abs(probs[a] - probs[sampled]) < tau]
        assert bias[out] == min(bias[a] for a in feasible)


# -- regularizer -------------------------------------------------------------

@pytest.mark.parametrize("short,lt,lt_next,expected", [
    (0.10, 0.3, 0.4, -0.1),   # unfair now, long-term gap grew: penalty
    (0.10, 0.3, 0.2, 0.0),    # unfair now, gap shrank: untouched
    (0.01, 0.3, 0.2, 0.1),    # fair now, gap shrank: bonus
    (0.01, 0.3, 0.4, 0.0),    # fair now, gap grew: untouched
    (0.05, 0.3, 0.2, 0.1),    # exactly delta counts as fair
    (0.10, 0.3, 0.3, 0.0),
])
def test_regularizer_branches(short, lt, lt_next, expected):
    assert regularizer(short, lt, lt_next, 0.05) == pytest.approx(expected, abs=1e-12)


@given(st.floats(0, 1), st.floats(0, 3), st.floats(0, 3), st.floats(0, 1))
def test_regularizer_sign(short, lt, lt_next, delta):
    r = regularizer(short, lt, lt_next, delta)
    if short > delta:
        assert r <= 0
    else:
        assert r >= 0


# -- schedules -----------------------------------------------------------------

class TestSchedules:
    raw_lending = ThresholdSchedule("lending_decay", tau_s=0.5, i_s=17, gamma=0.985)

    def test_lending_cold_start(self):
        assert schedule_threshold(self.raw_lending, 10) == 0.0
        assert schedule_threshold(self.raw_lending, 17) == 0.0

    def test_lending_after_start(self):
        assert schedule_threshold(self.raw_lending, 18) == pytest.approx(1 - 2 * 0.5 * 0.985)

    def test_epidemic(self):
        s = fairness.EPIDEMIC_SCHEDULE
        assert schedule_threshold(s, 49) == 0.0
        assert schedule_threshold(s, 50) == pytest.approx(0.01)
        assert schedule_threshold(s, 80) == pytest.approx(0.35)

    def test_static(self):
        assert schedule_threshold(fairness.ATTENTION_SCHEDULE, 0) == 0.08
        assert schedule_threshold(fairness.ATTENTION_SCHEDULE, 999) == 0.08

    @pytest.mark.parametrize("schedule", [raw_lending, fairness.EPIDEMIC_SCHEDULE])
    def test_non_decreasing(self, schedule):
        vals = [schedule_threshold(schedule, i) for i in range(400)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert all(0 <= v < 1 for v in vals)

    def test_horizon_is_identity_at_its_length(self):
        s = fairness.LENDING_SCHEDULE
        for i in (0, 17, 100, 349):
            assert schedule_threshold(s, i, 350) == schedule_threshold(self.raw_lending, i)

    def test_horizon_rescales_short_runs(self):
        s = fairness.LENDING_SCHEDULE
        assert schedule_threshold(s, 49, 50) == pytest.approx(schedule_threshold(self.raw_lending, 343))
        assert schedule_threshold(s, 2, 50) == 0.0    # 2 * 7 = 14 < 17
        # without a run length the raw index is used
        assert schedule_threshold(s, 49) == schedule_threshold(self.raw_lending, 49)

    def test_bad_inputs(self):
        with pytest.raises(ContractError):
            schedule_threshold(self.raw_lending, -1)
        with pytest.raises(ContractError):
            ThresholdSchedule("exotic")
        with pytest.raises(ContractError):
            ThresholdSchedule("static", horizon=0)


# -- disparity bounds ----------------------------------------------------------

class TestBounds:
    def test_identical_groups(self):
        m = PiecewiseLinear((0.0, 3.0), (0.0, 0.9))
        dp, bound, ok = fairness.dp_bound_check([0.25] * 4, [0.25] * 4, [0, 1, 2, 3], m, 0.3)
        assert dp == 0 and bound == 0 and ok

    def test_constant_model(self):
        m = PiecewiseLinear((0.0, 3.0), (0.5, 0.5))
        dp, _, ok = fairness.dp_bound_check([1, 0, 0, 0], [0, 0, 0, 1], [0, 1, 2, 3], m, 0.0)
        assert dp == 0 and ok

    def test_linear_model_is_tight(self):
        # h(x) = x/3 on point masses at 0 and 3: dp = 1 = (1/3) * 3
        m = PiecewiseLinear((0.0, 3.0), (0.0, 1.0))
        dp, bound, ok = fairness.dp_bound_check([1, 0, 0, 0], [0, 0, 0, 1], [0, 1, 2, 3], m, 1 / 3)
        assert dp == pytest.approx(1.0) and bound == pytest.approx(1.0) and ok

    def test_slope_violation(self):
        m = PiecewiseLinear((0.0, 1.0), (0.0, 1.0))
        with pytest.raises(ContractError):
            fairness.dp_bound_check([0.5, 0.5], [0.5, 0.5], [0, 1], m, 0.5)

    @given(seeds, st.integers(2, 10))
    def test_dp_bound(self, seed, n):
        rng = np.random.default_rng(seed)
        support = np.cumsum(rng.random(n) + 0.1)
        p, q = random_pair(rng, n)
        slope = float(rng.uniform(0.01, 2))
        m = random_model(rng, support, slope)
        dp, bound, ok = fairness.dp_bound_check(p, q, support, m, slope)
        assert ok and dp <= bound + 1e-9

    @given(seeds, st.integers(3, 10))
    def test_eo_bound_with_fair_labels(self, seed, n):
        rng = np.random.default_rng(seed)
        support = np.cumsum(rng.random(n) + 0.1)
        lh, lg = float(rng.uniform(0.01, 1)), float(rng.uniform(0.01, 1))
        h = random_model(rng, support, lh)
        g = random_model(rng, support, lg)
        gv = g(support)
        if gv.max() <= 1e-6:
            return
        p = rng.dirichlet(np.ones(n))
        # move p along a direction that keeps total mass and E[g] fixed
        basis = np.stack([np.ones(n), gv])
        v = rng.normal(size=n)
        v -= basis.T @ np.linalg.lstsq(basis.T, v, rcond=None)[0]
        neg = v < 0
        if not neg.any():
            return
        q = p + v * float(np.min(p[neg] / -v[neg])) * rng.uniform(0.1, 1.0)
        q = np.clip(q, 0, None)
        q /= q.sum()
        if abs(np.dot(p, gv) - np.dot(q, gv)) > 1e-9:
            return
        eo, bound, ok = fairness.eo_bound_check(p, q, support, h, g, lh, lg)
        assert ok and eo <= bound + 1e-9

    def test_eo_rejects_unfair_labels(self):
        g = PiecewiseLinear((0.0, 1.0), (0.0, 1.0))
        h = PiecewiseLinear((0.0, 1.0), (0.5, 0.5))
        with pytest.raises(ContractError):
            fairness.eo_bound_check([1, 0], [0, 1], [0, 1], h, g, 0.0, 1.0)
