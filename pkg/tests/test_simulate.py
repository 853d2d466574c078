import numpy as np
import pytest

from aoi_sched.errors import ProtocolViolationError
from aoi_sched.exact import evaluate_exact
from aoi_sched.mdp import Action, ChannelModel, State, Truncation, enumerate_states, transitions
from aoi_sched.policies import DeterministicTable, RenewalMixture, ThresholdPolicy
from aoi_sched.rvi import solve
from aoi_sched.simulate import SlotEnv, baseline_periodic, evaluate_simulated, run

TINY = 1e-300


def assert_trace_valid(trace, model):
    """Every recorded step must be in the transition support of its action."""
    big = Truncation(10**9, model.r_max if model.r_max is not None else 10**8)
    for rec in trace:
        support = {e.next for e in transitions(rec.state_before, rec.action, model, big)}
        assert rec.state_after in support, rec


class TestRunBasics:
    def test_error_free_always_new_pins_age(self):
        stats, trace = run(ThresholdPolicy(1), ChannelModel(TINY, 1.0, 0), 10, seed=3, collect_trace=True)
        ages = [rec.state_before.delta for rec in trace]
        assert ages == [1] * 10
        assert stats.mean_aoi == 1.0
        assert stats.mean_cost == 1.0

    def test_successful_retransmission_age_is_attempts_plus_one(self):
        # First attempt almost surely fails, the retransmission almost surely
        # succeeds, so the age after the second slot is r + 1 = 2.
        model = ChannelModel(1.0 - 1e-12, 1e-12, 3)
        trunc = Truncation(20, 3)
        acts = {
            s: (Action.RETRANSMIT if 1 <= s.r < 3 else Action.NEW_UPDATE)
            for s in enumerate_states(trunc)
        }
        _, trace = run(DeterministicTable(acts, trunc), model, 3, seed=0, collect_trace=True)
        assert trace[0].action is Action.NEW_UPDATE and trace[0].success is False
        assert trace[1].action is Action.RETRANSMIT and trace[1].success is True
        assert trace[1].state_after == State(2, 0)

    def test_idle_resets_attempt_marker(self):
        model = ChannelModel(1.0 - 1e-12, 0.9, 3)
        trunc = Truncation(20, 3)
        acts = {s: Action.IDLE for s in enumerate_states(trunc)}
        acts[State(1, 0)] = Action.NEW_UPDATE
        _, trace = run(DeterministicTable(acts, trunc), model, 3, seed=0, collect_trace=True)
        assert trace[0].state_after.r == 1
        assert trace[1].action is Action.IDLE
        assert trace[1].state_after.r == 0

    def test_seed_determinism(self):
        model = ChannelModel(0.5, 0.5, 3)
        pol = ThresholdPolicy(3)
        s1, t1 = run(pol, model, 2000, seed=42, collect_trace=True)
        s2, t2 = run(pol, model, 2000, seed=42, collect_trace=True)
        assert t1 == t2
        assert s1 == s2

    def test_trace_follows_transition_support(self):
        model = ChannelModel(0.4, 0.6, 3)
        trunc = Truncation(40, 3)
        out = solve(model, trunc, 3.0)
        _, trace = run(out.policy, model, 3000, seed=5, collect_trace=True)
        assert_trace_valid(trace, model)

    def test_protocol_violation_names_slot(self):
        trunc = Truncation(20, 3)
        acts = {s: Action.RETRANSMIT for s in enumerate_states(trunc)}
        bad = DeterministicTable(acts, trunc)
        with pytest.raises(ProtocolViolationError) as err:
            run(bad, ChannelModel(0.5, 0.5, 3), 10, seed=0)
        assert err.value.slot == 1


class TestLongRunAgreement:
    def test_threshold_cost_converges(self):
        model = ChannelModel(0.5, 1.0, 0)
        stats = evaluate_simulated(ThresholdPolicy(4), model, 100_000, 10, seed=11)
        se = np.sqrt(stats.var_cost / 10)
        assert abs(stats.mean_cost - 0.4) <= 3 * se + 1e-4

    def test_mixture_simulation_matches_exact(self):
        model = ChannelModel(0.5, 1.0, 0)
        trunc = Truncation(200, 0)
        mix = RenewalMixture(ThresholdPolicy(4), ThresholdPolicy(5), 2.0 / 7.0)
        exact = evaluate_exact(mix, model, trunc)
        stats = evaluate_simulated(mix, model, 100_000, 10, seed=13)
        for sim, ref, var in (
            (stats.mean_aoi, exact.avg_aoi, stats.var_aoi),
            (stats.mean_cost, exact.avg_cost, stats.var_cost),
        ):
            se = np.sqrt(var / 10)
            assert abs(sim - ref) <= 3 * se + 1e-3


class TestBaseline:
    def test_periods(self):
        assert baseline_periodic(0.4).period == 3
        assert baseline_periodic(1.0).period == 1

    def test_cost_under_budget(self):
        stats, _ = run(baseline_periodic(0.4), ChannelModel(0.5, 1.0, 0), 90_000, seed=1)
        assert stats.mean_cost == pytest.approx(1 / 3, abs=1e-4)
        assert stats.mean_cost <= 0.4

    def test_error_free_cycle_average(self):
        stats, _ = run(baseline_periodic(0.2), ChannelModel(TINY, 1.0, 0), 100_000, seed=1)
        assert stats.mean_aoi == pytest.approx(3.0, abs=1e-3)

    def test_error_free_quarter_budget_exact(self):
        # Horizon is a multiple of the period, so the accounting is exact.
        stats = evaluate_simulated(baseline_periodic(0.25), ChannelModel(TINY, 1.0, 0), 10_000, 3, seed=2)
        assert stats.mean_cost == pytest.approx(0.25, abs=1e-15)
        assert stats.mean_aoi == pytest.approx(2.5, abs=1e-3)

    def test_ignores_feedback(self):
        _, trace = run(baseline_periodic(0.25), ChannelModel(0.9, 1.0, 0), 100, seed=2, collect_trace=True)
        tx_slots = [rec.t for rec in trace if rec.action != Action.IDLE]
        assert tx_slots == [1, 5, 9, 13, 17, 21, 25, 29, 33, 37, 41, 45, 49, 53, 57, 61, 65, 69, 73, 77, 81, 85, 89, 93, 97]


class TestNoRetransmitAfterIdle:
    def test_solver_policy_traces_comply(self):
        # The attempt marker resets on idle slots, so a retransmission can
        # only ever follow a failed transmission.
        model = ChannelModel(0.5, 0.3, 5)
        trunc = Truncation(60, 5)
        out = solve(model, trunc, 4.0)
        _, trace = run(out.policy, model, 20_000, seed=9, collect_trace=True)
        for prev, cur in zip(trace, trace[1:]):
            if prev.action is Action.IDLE:
                assert cur.action is not Action.RETRANSMIT


class TestRunStatsAggregation:
    def test_per_rep_vectors_and_variance(self):
        model = ChannelModel(0.5, 1.0, 0)
        stats = evaluate_simulated(ThresholdPolicy(3), model, 5_000, 7, seed=17)
        assert len(stats.aoi_per_rep) == 7
        assert len(stats.cost_per_rep) == 7
        assert stats.mean_aoi == pytest.approx(np.mean(stats.aoi_per_rep))
        assert stats.var_aoi == pytest.approx(np.var(stats.aoi_per_rep, ddof=1))

    def test_replications_are_independent_streams(self):
        model = ChannelModel(0.5, 1.0, 0)
        stats = evaluate_simulated(ThresholdPolicy(3), model, 2_000, 4, seed=23)
        assert len(set(stats.aoi_per_rep)) > 1


class TestSlotEnv:
    def test_dynamics_match_protocol(self):
        rng = np.random.default_rng(0)
        env = SlotEnv(ChannelModel(TINY, 1.0, 3), rng)
        s, ok = env.step(Action.NEW_UPDATE)
        assert s == State(1, 0) and ok is True
        s, ok = env.step(Action.IDLE)
        assert s == State(2, 0) and ok is None

    def test_rejects_bad_retransmit(self):
        env = SlotEnv(ChannelModel(0.5, 0.5, 3), np.random.default_rng(0))
        with pytest.raises(ProtocolViolationError):
            env.step(Action.RETRANSMIT)
