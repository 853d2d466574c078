"""Slotted simulation of the source-channel-destination loop with ACK/NACK feedback.

One run executes a policy against the channel from the synchronized start
state (1, 0).  The age is never truncated here; simulation is the ground
truth against which solver truncation error is measured.  Channel noise is
one independent uniform draw per slot compared against the current decoding
error probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ProtocolViolationError
from .mdp import Action, ChannelModel, State
from .policies import (
    DeterministicTable,
    PeriodicPolicy,
    Policy,
    RandomizedTable,
    RenewalMixture,
    ThresholdPolicy,
)


@dataclass(frozen=True)
class SlotRecord:
    t: int
    state_before: State
    action: Action
    success: bool | None
    state_after: State


@dataclass(frozen=True)
class RunStats:
    """Time-averaged age and transmission rate, aggregated across replications."""

    mean_aoi: float
    mean_cost: float
    var_aoi: float
    var_cost: float
    aoi_per_rep: tuple[float, ...]
    cost_per_rep: tuple[float, ...]

    @classmethod
    def from_reps(cls, aois, costs) -> "RunStats":
        a = np.asarray(aois, dtype=np.float64)
        c = np.asarray(costs, dtype=np.float64)
        var_a = float(a.var(ddof=1)) if len(a) > 1 else 0.0
        var_c = float(c.var(ddof=1)) if len(c) > 1 else 0.0
        return cls(float(a.mean()), float(c.mean()), var_a, var_c, tuple(a), tuple(c))


def baseline_periodic(c_max: float) -> PeriodicPolicy:
    """No-feedback baseline: fresh update every ceil(1/c_max) slots."""
    if not 0.0 < c_max <= 1.0:
        raise ValueError(f"budget must lie in (0, 1], got {c_max}")
    return PeriodicPolicy(math.ceil(1.0 / c_max - 1e-12))


def _table_decider(policy, n_max, r_max):
    if isinstance(policy, DeterministicTable):
        rows = {s: {a: 1.0} for s, a in policy.actions.items()}
    else:
        rows = dict(policy.probs)
    # Dense (age, attempts) lookup of cumulative action probabilities.
    table = [[None] * (r_max + 1) for _ in range(n_max + 1)]
    for s, dist in rows.items():
        acc, cum = 0.0, []
        for a in sorted(dist):
            acc += dist[a]
            cum.append((acc, a))
        table[s.delta][s.r] = cum

    def decide(t, delta, r, u):
        cum = table[min(delta, n_max)][min(r, r_max)]
        for edge, a in cum:
            if u < edge:
                return a
        return cum[-1][1]

    return decide


def _make_decider(policy: Policy):
    if isinstance(policy, (DeterministicTable, RandomizedTable)):
        return _table_decider(policy, policy.trunc.n_max, policy.trunc.r_max)
    if isinstance(policy, ThresholdPolicy):
        thr, ptx = policy.threshold, policy.transmit_prob

        def decide(t, delta, r, u):
            if delta > thr or (delta == thr and u < ptx):
                return Action.NEW_UPDATE
            return Action.IDLE

        return decide
    if isinstance(policy, PeriodicPolicy):
        k = policy.period

        def decide(t, delta, r, u):
            return Action.NEW_UPDATE if (t - 1) % k == 0 else Action.IDLE

        return decide
    raise TypeError(f"no decider for policy kind {type(policy).__name__}")


def run(
    policy: Policy,
    model: ChannelModel,
    horizon: int,
    seed=0,
    *,
    collect_trace: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[RunStats, list[SlotRecord] | None]:
    """Simulate ``horizon`` slots from (1, 0); deterministic given the seed.

    Returns the single-replication time averages and, when requested, the
    full slot trace.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    # Fixed per-slot draws keep trajectories reproducible regardless of which
    # randomization branches fire.
    u_chan = rng.random(horizon)
    u_act = rng.random(horizon)
    u_mix = rng.random(horizon)

    mixture = isinstance(policy, RenewalMixture)
    if mixture:
        decide_a = _make_decider(policy.first)
        decide_b = _make_decider(policy.second)
        w = policy.weight_first
        decide = decide_a
    else:
        decide = _make_decider(policy)

    p0, lam = model.p0, model.lam
    r_cap = model.r_max  # None means unbounded
    r_fail_new = 1 if (r_cap is None or r_cap >= 1) else 0

    trace: list[SlotRecord] | None = [] if collect_trace else None
    delta, r = 1, 0
    aoi_sum = 0
    n_tx = 0
    for t in range(1, horizon + 1):
        if mixture and delta == 1 and r == 0:
            decide = decide_a if u_mix[t - 1] < w else decide_b
        d0, r0 = delta, r
        aoi_sum += delta
        a = decide(t, delta, r, u_act[t - 1])
        if a == Action.IDLE:
            success = None
            delta, r = delta + 1, 0
        elif a == Action.NEW_UPDATE:
            n_tx += 1
            if u_chan[t - 1] < p0:
                success = False
                delta, r = delta + 1, r_fail_new
            else:
                success = True
                delta, r = 1, 0
        else:
            if r < 1:
                raise ProtocolViolationError(t, "retransmit with no failed packet in flight")
            if r_cap is not None and r >= r_cap:
                raise ProtocolViolationError(t, f"retransmit at the attempt cap r={r}")
            n_tx += 1
            if u_chan[t - 1] < p0 * lam**r:
                success = False
                delta, r = delta + 1, r + 1
            else:
                success = True
                delta, r = r + 1, 0
        if collect_trace:
            trace.append(SlotRecord(t, State(d0, r0), Action(a), success, State(delta, r)))

    stats = RunStats.from_reps([aoi_sum / horizon], [n_tx / horizon])
    return stats, trace


def evaluate_simulated(
    policy: Policy,
    model: ChannelModel,
    horizon: int,
    replications: int,
    seed=0,
) -> RunStats:
    """Independent replications with per-replication streams derived from (seed, index)."""
    if replications < 1:
        raise ValueError(f"replications must be at least 1, got {replications}")
    aois, costs = [], []
    for rep in range(replications):
        stats, _ = run(policy, model, horizon, rng=np.random.default_rng([seed, rep]))
        aois.append(stats.mean_aoi)
        costs.append(stats.mean_cost)
    return RunStats.from_reps(aois, costs)


class SlotEnv:
    """Minimal slot interface for learners: hides the error profile.

    ``step`` applies an action to the true (untruncated) state and reports
    the next state and the transmission outcome.
    """

    def __init__(self, model: ChannelModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self.state = State(1, 0)

    def reset(self) -> State:
        self.state = State(1, 0)
        return self.state

    def admissible(self, a: Action) -> bool:
        if a is not Action.RETRANSMIT:
            return True
        r_cap = self.model.r_max
        return self.state.r >= 1 and (r_cap is None or self.state.r < r_cap)

    def step(self, a: Action) -> tuple[State, bool | None]:
        delta, r = self.state
        if a is Action.IDLE:
            self.state = State(delta + 1, 0)
            return self.state, None
        if not self.admissible(a):
            raise ProtocolViolationError(0, f"inadmissible action {a.name} in state {self.state}")
        attempts = 0 if a is Action.NEW_UPDATE else r
        failed = self.rng.random() < self.model.error_prob(attempts)
        if a is Action.NEW_UPDATE:
            r_cap = self.model.r_max
            r_fail = 1 if (r_cap is None or r_cap >= 1) else 0
            self.state = State(delta + 1, r_fail) if failed else State(1, 0)
        else:
            self.state = State(delta + 1, r + 1) if failed else State(r + 1, 0)
        return self.state, not failed
