from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from topodyn.analysis import diameter
from topodyn.dynamics import (
    CONVERGED,
    IntegrationFailure,
    SimConfig,
    StepRejected,
    canonicalize,
    integrate,
    pairwise_derivative,
    rhs,
    step,
)
from topodyn.topology import OpinionState, compute_neighbors

from conftest import brute_neighbors, brute_rhs, exact


def S(x, k):
    return OpinionState.from_values(x, k)


def two_agent_exact(t):
    return np.array([0.5 - 0.5 * np.exp(-2 * t), 0.5 + 0.5 * np.exp(-2 * t)])


class TestRhs:
    def test_three_agents(self):
        assert rhs(S([0, 1, 3], 1)).tolist() == [1.0, -1.0, -2.0]

    def test_clusterization_is_still(self):
        x = np.repeat([0.1, 0.45, 0.9], [3, 4, 3])
        assert np.all(rhs(S(x, 2)) == 0.0)

    def test_k2n7_is_exactly_zero(self, k2n7):
        v = rhs(k2n7)
        assert all(e == 0 for e in v)
        assert v[6] == Fraction(0)

    def test_k4n14_is_exactly_zero(self, k4n14):
        assert all(e == 0 for e in rhs(k4n14))

    def test_k4n14_dyadic_scaling_is_exact_in_floats(self):
        # 0, 2, 3, 5 are representable, so the float path has no rounding to hide behind
        x = np.repeat([0.0, 2.0, 3.0, 5.0], [5, 2, 2, 5])
        assert np.all(rhs(S(x, 4)) == 0.0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=2, max_size=20), st.integers(1, 19))
    def test_matches_brute_force(self, grid, k):
        x = np.array(grid, dtype=float) / 8.0
        k = min(k, len(x) - 1)
        np.testing.assert_allclose(rhs(S(x, k)), brute_rhs(x, k), rtol=0, atol=1e-12)

    def test_each_velocity_is_sum_of_signed_distances(self, rng):
        x = rng.uniform(size=20)
        nb = brute_neighbors(x, 4)
        v = rhs(S(x, 4))
        for i in range(20):
            assert v[i] == pytest.approx(sum(x[j] - x[i] for j in nb[i]), abs=1e-14)

    def test_metric_radius(self):
        assert rhs(S([0, 0.5, 2], 1), radius=1.0).tolist() == [0.5, -0.5, 0.0]


class TestStep:
    def test_clusterization_unchanged(self):
        s = S(np.repeat([0.0, 1.0], [3, 3]), 2)
        assert step(s, 0.3) == s

    def test_two_agents_fifth_order_local_error(self):
        errs = []
        for h in (0.02, 0.01):
            y = step(S([0.0, 1.0], 1), h).x
            errs.append(np.max(np.abs(y - two_agent_exact(h))))
        # local error of a 4th-order method is O(h^5)
        assert 26 < errs[0] / errs[1] < 38

    def test_three_agents_small_step(self):
        h = 1e-4
        y = step(S([0, 1, 3], 1), h).x
        disp = y - np.array([0, 1, 3])
        np.testing.assert_allclose(disp, h * np.array([1, -1, -2]), atol=10 * h * h)

    def test_euler_is_first_order_in_displacement(self):
        h = 1e-3
        y = step(S([0, 1, 3], 1), h, method="euler").x
        np.testing.assert_allclose(y, [h, 1 - h, 3 - 2 * h], rtol=0, atol=1e-15)

    def test_map_is_frozen_inside_the_step(self):
        # with neighbours frozen at x=[0,1,3] the step approximates exp(-hL) x
        s = S([0.0, 1.0, 3.0], 1)
        lap = np.array([[1, -1, 0], [-1, 1, 0], [0, -1, 1]], dtype=float)
        for h in (0.1, 0.05):
            frozen = expm(-h * lap) @ s.x
            err = np.max(np.abs(step(s, h).x - frozen))
            assert err < 2 * (2 * h) ** 5 / 120

    def test_rejects_order_inversion(self):
        with pytest.raises(StepRejected):
            step(S([0.0, 1.0], 1), 1.0, method="euler")

    def test_rejects_non_positive_h(self):
        with pytest.raises(ValueError):
            step(S([0.0, 1.0], 1), 0.0)


class TestIntegrate:
    def test_clusterization_converges_after_stall_window(self):
        x = np.repeat([0.0, 1.0], [3, 3])
        tr = integrate(S(x, 2), SimConfig(stall_window=1.0))
        assert tr.status == CONVERGED
        assert tr.t_final == pytest.approx(1.0, abs=1e-12)
        assert tr.events == []
        assert np.all(tr.values == x)

    def test_two_agents_reach_one_half(self):
        tr = integrate(S([0.0, 1.0], 1))
        assert tr.converged and tr.events == []
        np.testing.assert_allclose(tr.values[-1], [0.5, 0.5], atol=1e-9)

    def test_two_agents_track_closed_form(self):
        tr = integrate(S([0.0, 1.0], 1), SimConfig(t_max=3.0, conv_tol=1e-300))
        exact = np.array([two_agent_exact(t) for t in tr.times])
        assert np.max(np.abs(tr.values - exact)) < 1e-12

    def test_samples_start_at_zero_and_increase(self, rng):
        tr = integrate(S(rng.uniform(size=9), 2), SimConfig(t_max=5.0))
        assert tr.times[0] == 0.0
        assert np.all(np.diff(tr.times) > 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_small_group_reaches_consensus(self, seed):
        x0 = np.random.default_rng(seed).uniform(size=7)
        tr = integrate(S(x0, 3))
        assert tr.converged
        assert diameter(tr.final) < 10 * tr.config.conv_tol

    def test_failure_is_reported(self):
        # with k = n-1 and a huge step even the minimum step overshoots
        x0 = np.linspace(0, 1, 50)
        with pytest.raises(IntegrationFailure) as info:
            integrate(S(x0, 49), SimConfig(step=100.0, record_every=100.0, method="euler"))
        assert info.value.t > 0
        assert "order" in str(info.value)

    def test_horizon(self):
        tr = integrate(S([0.0, 1.0], 1), SimConfig(t_max=0.5))
        assert tr.status == "horizon_reached"
        assert tr.t_final == 0.5

    def test_metric_two_clusters_merge(self):
        x = np.array([0.0, 0.0, 0.75, 1.5, 1.5])
        tr = integrate(S(x, 1), radius=1.0)
        assert tr.converged
        assert diameter(tr.final) < 1e-8


class TestIntegratorOrder:
    @staticmethod
    def error_at_one(h, method):
        tr = integrate(S([0.0, 1.0], 1), SimConfig(step=h, t_max=1.0, conv_tol=1e-300, method=method))
        assert tr.t_final == 1.0
        return np.max(np.abs(tr.values[-1] - two_agent_exact(1.0)))

    @pytest.mark.parametrize("method,order", [("rk4", 4), ("euler", 1)])
    def test_halving_h(self, method, order):
        errs = [self.error_at_one(h, method) for h in (1e-2, 5e-3, 2.5e-3)]
        for a, b in zip(errs, errs[1:]):
            assert abs(a / b - 2**order) <= 0.2 * 2**order


class TestPairwiseDerivative:
    def test_three_agents(self):
        assert pairwise_derivative(S([0, 1, 3], 1), 2, 0) == pytest.approx(-3.0)

    def test_equal_opinions(self):
        assert pairwise_derivative(S([0.2, 0.2, 0.2, 0.9], 2), 0, 1) == 0.0

    def test_same_agent_rejected(self):
        with pytest.raises(ValueError):
            pairwise_derivative(S([0, 1], 1), 0, 0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=15), st.integers(1, 14), st.data())
    def test_equals_difference_of_rhs(self, x, k, data):
        k = min(k, len(x) - 1)
        i = data.draw(st.integers(0, len(x) - 1))
        j = data.draw(st.integers(0, len(x) - 1).filter(lambda v: v != i))
        s = S(x, k)
        v = rhs(s)
        scale = max(1.0, float(np.max(np.abs(x))))
        assert pairwise_derivative(s, i, j) == pytest.approx(v[i] - v[j], abs=1e-12 * k * scale)

    def test_exact_identity(self, k4n14):
        v = rhs(k4n14)
        for i in range(14):
            for j in range(14):
                if i != j:
                    assert pairwise_derivative(k4n14, i, j) == v[i] - v[j]

    def test_small_group_contraction_rate(self, rng):
        for _ in range(200):
            k = int(rng.integers(1, 6))
            n = int(rng.integers(k + 1, 2 * k + 2))
            s = S(np.sort(rng.uniform(size=n)), k)
            assert pairwise_derivative(s, n - 1, 0) <= -(s.x[-1] - s.x[0]) + 1e-12


class TestCanonicalize:
    def test_sorted_is_identity(self):
        s, sigma = canonicalize(S([0.1, 0.2, 0.7], 1))
        assert sigma.tolist() == [0, 1, 2]
        assert s.x.tolist() == [0.1, 0.2, 0.7]

    def test_k2n7(self):
        s, sigma = canonicalize(S([0, 1, 0, 1, 0, 1, 0.5], 2))
        assert s.x.tolist() == [0, 0, 0, 0.5, 1, 1, 1]
        assert sigma.tolist() == [0, 4, 1, 5, 2, 6, 3]

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 18), st.integers(1, 17), st.integers(0, 2**32 - 1))
    def test_rhs_commutes_with_sorting(self, n, k, seed):
        # repeated values are allowed; equidistant neighbours on opposite sides are not
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=n)[rng.integers(0, max(1, n // 2), size=n)]
        k = min(k, n - 1)
        s = S(x, k)
        sorted_state, sigma = canonicalize(s)
        # neighbour sums run in index order, so only rounding may differ
        np.testing.assert_allclose(rhs(sorted_state)[sigma], rhs(s), rtol=0, atol=1e-13)

    def test_mirrored_tie_breaks_commutation(self):
        # agent 0 is equidistant from agents 1 and 2; sorting swaps their index order,
        # so the lower-index rule picks the other side
        x = [Fraction(1, 2), Fraction(5, 6), Fraction(1, 6)]
        s = OpinionState.from_values(exact(x), 1)
        sorted_state, sigma = canonicalize(s)
        assert rhs(s)[0] == Fraction(1, 3)
        assert rhs(sorted_state)[sigma[0]] == Fraction(-1, 3)

    def test_integration_commutes_with_sorting(self, rng):
        x = rng.uniform(size=6)[rng.integers(0, 6, size=12)]
        s = S(x, 3)
        sorted_state, sigma = canonicalize(s)
        cfg = SimConfig(t_max=3.0)
        a = integrate(s, cfg)
        b = integrate(sorted_state, cfg)
        np.testing.assert_allclose(b.values[:, sigma], a.values, rtol=0, atol=1e-12)


class TestTrajectoryProperties:
    @pytest.fixture(scope="class")
    @classmethod
    def runs(cls):
        out = []
        for seed in range(12):
            rng = np.random.default_rng(100 + seed)
            k = int(rng.integers(1, 5))
            n = int(rng.integers(k + 1, 25))
            out.append(integrate(S(rng.uniform(size=n), k), SimConfig(t_max=30.0)))
        return out

    def test_order_preserved_with_gronwall_floor(self, runs):
        # mutual neighbours add -(x_i - x_j) to the k-term, so the floor decays at k+1
        for tr in runs:
            x0 = tr.values[0]
            i, j = np.nonzero(x0[:, None] > x0[None, :])
            floor = (x0[i] - x0[j])[None, :] * np.exp(-(tr.k + 1) * tr.times)[:, None]
            gap = tr.values[:, i] - tr.values[:, j]
            assert np.all(gap >= floor - 1e-9)

    def test_rate_k_floor_fails_for_two_agents(self):
        tr = integrate(S([0.0, 1.0], 1), SimConfig(t_max=1.0, conv_tol=1e-300))
        gap = tr.values[:, 1] - tr.values[:, 0]
        np.testing.assert_allclose(gap, np.exp(-2 * tr.times), atol=1e-12)
        assert np.min(gap - np.exp(-tr.times)) < -0.2

    def test_event_log_soundness(self, runs):
        for tr in runs:
            ev_times = np.array([e.t for e in tr.events])
            seg = np.searchsorted(ev_times, tr.times, side="right")
            maps = {}
            for s_id, x in zip(seg, tr.values):
                sets = tuple(compute_neighbors(S(x, tr.k)).sets())
                assert maps.setdefault(s_id, sets) == sets

    def test_events_change_neighbour_sets(self, runs):
        for tr in runs:
            for e in tr.events:
                assert set(e.before) != set(e.after)

    def test_small_groups_contract(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            k = int(rng.integers(1, 5))
            tr = integrate(S(rng.uniform(size=2 * k + 1), k))
            d0 = np.ptp(tr.values[0])
            assert np.all(np.ptp(tr.values, axis=1) <= d0 * np.exp(-tr.times) + 1e-9)

    def test_k1_components_never_merge(self):
        from topodyn.topology import validate_k1_structure

        for seed in range(10):
            x0 = np.random.default_rng(seed).uniform(size=12)
            tr = integrate(S(x0, 1))
            counts = [len(validate_k1_structure(S(v, 1)).components) for v in tr.values]
            assert all(b >= a for a, b in zip(counts, counts[1:]))

    def test_metric_order_preserved(self, rng):
        for _ in range(5):
            tr = integrate(S(rng.uniform(size=15), 1), SimConfig(t_max=20.0), radius=0.15)
            order = np.argsort(tr.values[0], kind="stable")
            assert np.all(np.diff(tr.values[:, order], axis=1) >= -1e-12)
