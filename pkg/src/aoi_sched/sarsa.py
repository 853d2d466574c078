"""Average-cost on-policy temporal-difference learning with softmax exploration.

The learner knows nothing about the channel: it maintains a tabular
state-action cost estimate over the truncated state set, samples actions
from a Boltzmann distribution over the negated estimates, and tracks the
long-run average cost (the gain) as a running mean.  The temporal-difference
target uses the action actually played next, so the update is on-policy.

Under a transmission budget the per-transmission charge is adapted online:
whenever the empirical transmission rate overshoots the budget the charge
grows, otherwise it shrinks, on a decaying 1/sqrt(n) schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp import Action, ChannelModel, State, StateSpace, Truncation
from .policies import DeterministicTable
from .simulate import SlotEnv

_N_ACTIONS = len(Action)


@dataclass(frozen=True)
class LearnerConfig:
    """Learning knobs; the charge defaults are tuned on the budgeted benchmark."""

    trunc: Truncation
    tau: float = 1.0
    alpha0: float = 1.0  # learning rate alpha0 / sqrt(n)
    eta0: float = 2.0
    eta_adapt: bool = True
    eta_step: float = 0.5  # charge step eta_step / sqrt(n)
    c_max: float = 1.0
    horizon: int = 10_000
    seed: int = 0
    tau_anneal: float = 1.0  # per-step geometric factor; 1.0 keeps tau fixed
    unconstrained: bool = False  # budget-free mode: idling removed from the action set

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.alpha0 < 0.0:
            raise ValueError(f"alpha0 must be non-negative, got {self.alpha0}")
        if not 0.0 < self.c_max <= 1.0:
            raise ValueError(f"c_max must lie in (0, 1], got {self.c_max}")
        if not 0.0 < self.tau_anneal <= 1.0:
            raise ValueError(f"tau_anneal must lie in (0, 1], got {self.tau_anneal}")


@dataclass
class LearnerState:
    """Mutable learner internals: the table, gain tracker and charge."""

    space: StateSpace
    q: np.ndarray  # (n_states, n_actions)
    admissible: np.ndarray  # (n_states, n_actions) selection mask
    gain: float = 0.0
    eta: float = 0.0
    n: int = 0
    empirical_cost: float = 0.0
    tau: float = 1.0
    state: State = State(1, 0)
    next_action: Action | None = None

    def q_row(self, s: State) -> np.ndarray:
        return self.q[self._index(s)]

    def _index(self, s: State) -> int:
        clamped = State(min(s.delta, self.space.trunc.n_max), min(s.r, self.space.r_cap))
        return self.space.index[clamped]

    def greedy_table(self) -> DeterministicTable:
        """Exploration-free policy read off the current table.

        Ties prefer transmitting: rows of states the learner never visited
        are still all zero, and reading them as idle would freeze the age at
        every unexplored state.
        """
        actions = {}
        for i, s in enumerate(self.space.states):
            row = np.where(self.admissible[i], self.q[i], np.inf)
            best = np.flatnonzero(row == row.min())
            actions[s] = Action(int(best[-1] if len(best) > 1 else best[0]))
        return DeterministicTable(actions, Truncation(self.space.trunc.n_max, self.space.r_cap))


@dataclass(frozen=True)
class Timeline:
    """Per-step running averages recorded during training."""

    steps: np.ndarray
    running_aoi: np.ndarray
    running_cost: np.ndarray
    eta: np.ndarray
    gain: np.ndarray


def softmax_probs(q_row: np.ndarray, tau: float, admissible: np.ndarray) -> np.ndarray:
    """Boltzmann distribution over admissible actions of one table row.

    Costs are negated (smaller is better) and shifted by the row minimum
    before exponentiation for numerical stability.
    """
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    z = np.full(q_row.shape, -np.inf)
    vals = q_row[admissible]
    z[admissible] = -(vals - vals.min()) / tau
    w = np.exp(z)
    return w / w.sum()


def make_learner(cfg: LearnerConfig, model_for_masks: ChannelModel) -> LearnerState:
    """Fresh all-zero table over the truncated state set."""
    space = StateSpace(model_for_masks, cfg.trunc)
    q = np.zeros((len(space), _N_ACTIONS))
    admissible = space.admissible.copy()
    if cfg.unconstrained:
        admissible[:, Action.IDLE] = False
    return LearnerState(space=space, q=q, admissible=admissible, eta=cfg.eta0, tau=cfg.tau)


def _sample_action(probs: np.ndarray, u: float) -> Action:
    acc = 0.0
    for k in range(_N_ACTIONS - 1):
        acc += probs[k]
        if u < acc:
            return Action(k)
    return Action(_N_ACTIONS - 1)


def step(ls: LearnerState, env: SlotEnv, cfg: LearnerConfig, rng: np.random.Generator) -> LearnerState:
    """One slot of on-policy learning; mutates and returns ``ls``.

    Samples the current action from the softmax (unless one was already
    committed by the previous step's target), observes the transition, then
    applies the temporal-difference update followed by the gain, empirical
    cost and charge updates.
    """
    n = ls.n + 1
    i = ls._index(ls.state)
    if ls.next_action is None:
        probs = softmax_probs(ls.q[i], ls.tau, ls.admissible[i])
        a = _sample_action(probs, rng.random())
    else:
        a = ls.next_action

    nxt, _ = env.step(a)
    # Cost lives in the truncated problem: the age is clamped like the table.
    delta_cl = min(ls.state.delta, ls.space.trunc.n_max)
    c = float(delta_cl) + (ls.eta if a.transmits else 0.0)

    j = ls._index(nxt)
    probs_next = softmax_probs(ls.q[j], ls.tau, ls.admissible[j])
    a_next = _sample_action(probs_next, rng.random())

    alpha = cfg.alpha0 / math.sqrt(n)
    ls.q[i, a] += alpha * (c - ls.gain + ls.q[j, a_next] - ls.q[i, a])
    ls.gain += (c - ls.gain) / n
    ls.empirical_cost += ((1.0 if a.transmits else 0.0) - ls.empirical_cost) / n
    if cfg.eta_adapt:
        ls.eta = max(0.0, ls.eta + cfg.eta_step / math.sqrt(n) * (ls.empirical_cost - cfg.c_max))
    ls.tau *= cfg.tau_anneal

    ls.state = nxt
    ls.next_action = a_next
    ls.n = n
    return ls


def train(model: ChannelModel, cfg: LearnerConfig) -> tuple[LearnerState, Timeline]:
    """Run the learner against the hidden channel for ``cfg.horizon`` slots.

    The recorded running-average age uses the true (untruncated) ages, so the
    timeline measures real performance; deterministic given ``cfg.seed``.
    """
    if cfg.horizon < 0:
        raise ValueError(f"horizon must be non-negative, got {cfg.horizon}")
    rng_env = np.random.default_rng([cfg.seed, 0])
    rng_act = np.random.default_rng([cfg.seed, 1])
    env = SlotEnv(model, rng_env)
    ls = make_learner(cfg, model)
    ls.state = env.reset()

    steps = np.arange(1, cfg.horizon + 1)
    r_aoi = np.empty(cfg.horizon)
    r_cost = np.empty(cfg.horizon)
    etas = np.empty(cfg.horizon)
    gains = np.empty(cfg.horizon)
    aoi_sum = 0.0
    for k in range(cfg.horizon):
        true_delta = ls.state.delta
        step(ls, env, cfg, rng_act)
        aoi_sum += true_delta
        r_aoi[k] = aoi_sum / (k + 1)
        r_cost[k] = ls.empirical_cost
        etas[k] = ls.eta
        gains[k] = ls.gain
    return ls, Timeline(steps, r_aoi, r_cost, etas, gains)
