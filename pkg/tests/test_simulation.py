"""
Tests for the Monte Carlo simulator.
"""
import unittest

import numpy as np
import pytest

from freshness_mdp.aoii import build_aoii_token_mdp, derive_chain_params
from freshness_mdp.exceptions import LayoutMismatchError, ValidationError
from freshness_mdp.mdp import long_run_average, rvia
from freshness_mdp.models import BaselineKind, LagrangeVec, MixedPolicy, SimConfig, TokenParams, TwoRateParams
from freshness_mdp.simulation import baseline_decision, simulate, spawn_streams, trace_columns
from freshness_mdp.two_rate import build_two_rate_lagrangian_mdp, build_two_rate_token_mdp, context_rates

PARAMS = TwoRateParams(q=0.3, alpha_min=0.1, alpha_max=0.5, delta_max=8, b_max=2)


def within(estimate, exact, stderr, slack=1e-3):
    return abs(estimate - exact) <= 4 * stderr + slack


class TestStreams(unittest.TestCase):
    """Tests for per-run random streams."""

    def test_prefix_stable(self):
        """Test that run i's stream does not depend on the number of runs."""
        few = spawn_streams(7, 2)
        many = spawn_streams(7, 5)
        np.testing.assert_array_equal(few[1].random(5), many[1].random(5))

    def test_runs_differ(self):
        """Test that sibling streams are distinct."""
        a, b = spawn_streams(7, 2)
        self.assertFalse(np.array_equal(a.random(5), b.random(5)))


class TestBaselineDecision(unittest.TestCase):
    """Tests for the reference rules."""

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_uniform_alternates(self):
        """Test that rate 0.5 updates every other slot: 0, 1, 0, 1."""
        credit = np.zeros(2)
        actions = [baseline_decision("uniform", 0, self.rng, rates=(0.5, 0.9), credit=credit)
                   for _ in range(4)]
        self.assertEqual(actions, [0, 1, 0, 1])
        self.assertEqual(credit[1], 0.0)

    def test_uniform_contexts_are_separate(self):
        """Test that each request context keeps its own credit."""
        credit = np.zeros(2)
        baseline_decision("uniform", 1, self.rng, rates=(0.1, 0.5), credit=credit)
        self.assertAlmostEqual(credit[0], 0.0)
        self.assertAlmostEqual(credit[1], 0.5)

    def test_uniform_needs_credit(self):
        """Test that the uniform rule refuses to run without an accumulator."""
        with self.assertRaises(ValidationError):
            baseline_decision("uniform", 0, self.rng, rates=(0.5, 0.5))

    def test_rates_required(self):
        """Test that the random rule needs its rates."""
        with self.assertRaises(ValidationError):
            baseline_decision(BaselineKind.RANDOM_TWO_RATE, 0, self.rng)

    def test_never_and_greedy(self):
        """Test the two rules that ignore randomness."""
        self.assertEqual(baseline_decision("never", 1, self.rng), 0)
        self.assertEqual(baseline_decision("greedy", 0, self.rng, allowed=True), 1)
        self.assertEqual(baseline_decision("greedy", 0, self.rng, allowed=False), 0)


class TestSimulate(unittest.TestCase):
    """Tests for trajectory simulation."""

    def setUp(self):
        self.lagrangian = build_two_rate_lagrangian_mdp(PARAMS, LagrangeVec(lambda0=0.0, lambda1=0.0))
        self.token = build_two_rate_token_mdp(PARAMS)

    def test_never_update_saturates(self):
        """Test that idling forever pins the age at delta_max."""
        cfg = SimConfig(horizon_T=200, n_runs=3, burn_in=20)
        result = simulate(self.lagrangian, "never", cfg)
        self.assertEqual(result.avg_cost, PARAMS.delta_max)
        self.assertEqual(result.total_rate, 0.0)
        self.assertEqual(result.stderr_cost, 0.0)

    def test_greedy_spends_every_token(self):
        """Test that greedy updates at the token arrival rate of each context."""
        cfg = SimConfig(horizon_T=20_000, n_runs=20, master_seed=1)
        result = simulate(self.token, BaselineKind.GREEDY_TOKEN, cfg)
        self.assertTrue(within(result.rate0, PARAMS.alpha0, result.stderr_rate0, 0.003))
        self.assertTrue(within(result.rate1, PARAMS.alpha1, result.stderr_rate1, 0.003))

    def test_greedy_single_rate(self):
        """Test that greedy spends alpha on the single-rate token model."""
        mdp = build_aoii_token_mdp(derive_chain_params(4, 0.7, 0.9, 10),
                                   TokenParams(alpha=0.2, b_max=3))
        result = simulate(mdp, "greedy", SimConfig(horizon_T=20_000, n_runs=20, master_seed=2))
        self.assertTrue(within(result.rate0, 0.2, result.stderr_rate0, 0.003))
        self.assertEqual(result.rate1, 0.0)

    def test_random_rule_rate(self):
        """Test that the random rule updates at (1-q) alpha_min and q alpha_max."""
        cfg = SimConfig(horizon_T=20_000, n_runs=20, master_seed=3)
        result = simulate(self.lagrangian, "random", cfg,
                          baseline_rates=(PARAMS.alpha_min, PARAMS.alpha_max))
        self.assertTrue(within(result.rate0, PARAMS.alpha0, result.stderr_rate0, 0.003))
        self.assertTrue(within(result.rate1, PARAMS.alpha1, result.stderr_rate1, 0.003))

    def test_uniform_rule_rate(self):
        """Test that the credit rule hits its rates almost exactly."""
        cfg = SimConfig(horizon_T=20_000, n_runs=5, master_seed=4)
        result = simulate(self.lagrangian, "uniform", cfg,
                          baseline_rates=(PARAMS.alpha_min, PARAMS.alpha_max))
        self.assertAlmostEqual(result.rate0, PARAMS.alpha0, delta=0.01)
        self.assertAlmostEqual(result.rate1, PARAMS.alpha1, delta=0.01)

    def test_masked_updates_become_idles(self):
        """Test that a rule cannot spend tokens the bucket does not hold."""
        cfg = SimConfig(horizon_T=20_000, n_runs=5, master_seed=5)
        result = simulate(self.token, "uniform", cfg, baseline_rates=(0.9, 0.9))
        self.assertLessEqual(result.rate0, PARAMS.alpha0 + 0.01)
        self.assertLessEqual(result.rate1, PARAMS.alpha1 + 0.01)

    def test_policy_matches_exact_value(self):
        """Test that a deterministic policy's estimate brackets its exact J."""
        mdp = build_two_rate_lagrangian_mdp(PARAMS, LagrangeVec(lambda0=2.0, lambda1=2.0))
        policy = rvia(mdp).policy
        J, rate0, rate1 = context_rates(self.lagrangian, policy)
        result = simulate(mdp, policy, SimConfig(horizon_T=20_000, n_runs=20, master_seed=6))
        self.assertTrue(within(result.avg_cost, J, result.stderr_cost, 0.01))
        self.assertTrue(within(result.rate0, rate0, result.stderr_rate0, 0.003))
        self.assertTrue(within(result.rate1, rate1, result.stderr_rate1, 0.003))

    def test_mixture_drawn_once_per_run(self):
        """Test that each run follows one component of a mixed policy."""
        n = self.lagrangian.n_states
        always, never = np.ones(n, dtype=int), np.zeros(n, dtype=int)
        mixed = MixedPolicy.two_policy(always, never, 0.5)
        cfg = SimConfig(horizon_T=200, n_runs=400, burn_in=20, master_seed=7)
        result = simulate(self.lagrangian, mixed, cfg)
        exact = 0.5 * long_run_average(self.lagrangian, always, self.lagrangian.cost) \
            + 0.5 * long_run_average(self.lagrangian, never, self.lagrangian.cost)
        self.assertTrue(within(result.avg_cost, exact, result.stderr_cost))
        self.assertGreater(result.stderr_cost, 0.0)

    def test_reproducible(self):
        """Test that one seed gives identical results."""
        cfg = SimConfig(horizon_T=500, n_runs=4, master_seed=11)
        first = simulate(self.lagrangian, "random", cfg, baseline_rates=(0.1, 0.5))
        second = simulate(self.lagrangian, "random", cfg, baseline_rates=(0.1, 0.5))
        self.assertEqual(first, second)

    def test_chunking_does_not_matter(self):
        """Test that the chunk size leaves every draw in place."""
        results = [
            simulate(self.lagrangian, "random",
                     SimConfig(horizon_T=500, n_runs=4, master_seed=11, chunk_size=size),
                     baseline_rates=(0.1, 0.5))
            for size in (7, 1000)
        ]
        self.assertEqual(results[0].avg_cost, results[1].avg_cost)
        self.assertEqual(results[0].rate1, results[1].rate1)

    def test_first_run_independent_of_run_count(self):
        """Test that run 0's trajectory ignores how many runs share the batch."""
        traces = [
            simulate(self.lagrangian, "random",
                     SimConfig(horizon_T=100, n_runs=n, master_seed=12, trace_runs=1),
                     baseline_rates=(0.1, 0.5)).trace
            for n in (1, 3)
        ]
        self.assertEqual(traces[0], traces[1])

    def test_trace_rows(self):
        """Test the trace header and row width."""
        cfg = SimConfig(horizon_T=10, n_runs=2, trace_runs=2)
        result = simulate(self.lagrangian, "never", cfg)
        columns = trace_columns(self.lagrangian)
        self.assertEqual(columns, ["run", "t", "delta", "r", "action", "cost"])
        self.assertEqual(len(result.trace), 20)
        self.assertTrue(all(len(row) == len(columns) for row in result.trace))
        self.assertEqual(result.trace[0][:2], (0, 0))

    def test_policy_of_wrong_size(self):
        """Test that a policy for another model is rejected."""
        with self.assertRaises(LayoutMismatchError):
            simulate(self.token, np.zeros(5, dtype=int))

    def test_bad_initial_state(self):
        """Test that the initial state must belong to the model."""
        with self.assertRaises(LayoutMismatchError):
            simulate(self.lagrangian, "never", initial_state=10_000)

    def test_rates_required(self):
        """Test that the uniform rule needs (alpha_min, alpha_max)."""
        with self.assertRaises(ValidationError):
            simulate(self.lagrangian, "uniform", SimConfig(horizon_T=10, n_runs=1))


@pytest.mark.parametrize("burn_in", [0, 5])
def test_counted_slots(burn_in):
    """Always updating from delta=1 costs exactly 1 per counted slot."""
    mdp = build_two_rate_lagrangian_mdp(PARAMS, LagrangeVec(lambda0=0.0, lambda1=0.0))
    policy = np.ones(mdp.n_states, dtype=int)
    result = simulate(mdp, policy, SimConfig(horizon_T=50, n_runs=2, burn_in=burn_in))
    assert result.avg_cost == 1.0
    assert result.total_rate == pytest.approx(1.0)


if __name__ == "__main__":
    unittest.main()
