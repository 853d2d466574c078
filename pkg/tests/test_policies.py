import pytest

from aoi_sched.mdp import Action, State, Truncation
from aoi_sched.policies import (
    DeterministicTable,
    PeriodicPolicy,
    RandomizedTable,
    RenewalMixture,
    ThresholdPolicy,
    table_difference,
)


class TestTables:
    def test_lookup_clamps_to_truncation(self):
        trunc = Truncation(5, 0)
        table = DeterministicTable(
            {State(d, 0): (Action.NEW_UPDATE if d == 5 else Action.IDLE) for d in range(1, 6)},
            trunc,
        )
        assert table.action_at(State(17, 0)) is Action.NEW_UPDATE
        assert table.action_probs(State(17, 0)) == {Action.NEW_UPDATE: 1.0}

    def test_randomized_rows_validated(self):
        trunc = Truncation(3, 0)
        with pytest.raises(ValueError):
            RandomizedTable({State(1, 0): {Action.IDLE: 0.6, Action.NEW_UPDATE: 0.6}}, trunc)
        with pytest.raises(ValueError):
            RandomizedTable({State(1, 0): {Action.IDLE: -0.2, Action.NEW_UPDATE: 1.2}}, trunc)

    def test_zero_probability_actions_dropped(self):
        trunc = Truncation(3, 0)
        table = RandomizedTable(
            {State(1, 0): {Action.IDLE: 1.0, Action.NEW_UPDATE: 0.0}}, trunc
        )
        assert table.action_probs(State(1, 0)) == {Action.IDLE: 1.0}

    def test_table_difference(self):
        trunc = Truncation(3, 0)
        base = {State(d, 0): Action.IDLE for d in range(1, 4)}
        other = dict(base)
        other[State(2, 0)] = Action.NEW_UPDATE
        diff = table_difference(
            DeterministicTable(base, trunc), DeterministicTable(other, trunc)
        )
        assert diff == [State(2, 0)]


class TestThresholdPolicy:
    def test_decision_regions(self):
        pol = ThresholdPolicy(4, 0.3)
        assert pol.action_probs(State(3, 0)) == {Action.IDLE: 1.0}
        assert pol.action_probs(State(4, 0)) == {Action.NEW_UPDATE: 0.3, Action.IDLE: 0.7}
        assert pol.action_probs(State(9, 2)) == {Action.NEW_UPDATE: 1.0}

    def test_validation(self):
        with pytest.raises(ValueError):
            ThresholdPolicy(0)
        with pytest.raises(ValueError):
            ThresholdPolicy(3, 1.5)

    def test_describe(self):
        assert ThresholdPolicy(4).describe() == "threshold[4]"
        assert "p=0.3" in ThresholdPolicy(4, 0.3).describe()


class TestMixtureAndPeriodic:
    def test_mixture_weight_validated(self):
        a, b = ThresholdPolicy(3), ThresholdPolicy(4)
        with pytest.raises(ValueError):
            RenewalMixture(a, b, 1.7)

    def test_periodic_schedule(self):
        pol = PeriodicPolicy(4)
        assert [pol.transmits_at(t) for t in range(1, 9)] == [
            True, False, False, False, True, False, False, False,
        ]

    def test_period_validated(self):
        with pytest.raises(ValueError):
            PeriodicPolicy(0)
