"""Core decision-process model for status-update scheduling with feedback.

The system state pairs the age of information at the destination (``delta``,
in slots) with the number of prior failed attempts of the in-flight packet
(``r``).  Each slot the scheduler idles, sends a fresh update, or retransmits
the failed packet; a single-bit ACK/NACK arrives instantly.  Decoding fails
with probability ``g(r) = p0 * lam**r``, non-increasing in the attempt count,
which covers classic ARQ (``lam = 1``, ``r_max = 0``) and exponentially
improving HARQ combining.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .errors import InadmissibleActionError, InadmissibleQueryError

# Scan limit when locating the first r with g(r) underflowing to exactly 0.
_UNDERFLOW_SCAN_LIMIT = 8192


class Action(IntEnum):
    """Per-slot decisions; numeric order is also the argmin tie-break order."""

    IDLE = 0
    NEW_UPDATE = 1
    RETRANSMIT = 2

    @property
    def code(self) -> str:
        """One-letter code used in CSV output."""
        return "inx"[self.value]

    @property
    def transmits(self) -> bool:
        return self is not Action.IDLE


class State(NamedTuple):
    """Age of information and prior failed attempts of the current packet."""

    delta: int
    r: int


class TransitionEntry(NamedTuple):
    next: State
    prob: float


@dataclass(frozen=True)
class ChannelModel:
    """Decoding-error profile ``g(r) = p0 * lam**r`` with retransmission cap.

    ``r_max`` is the largest admissible attempt count; ``None`` leaves it
    unbounded (the solver truncation then supplies the cap).  If ``g(r)``
    underflows to exactly zero for some ``r``, success at that point is
    certain and ``r_max`` is tightened to the smallest such ``r``.
    """

    p0: float
    lam: float = 1.0
    r_max: int | None = 0

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ValueError(f"p0 must lie in (0, 1), got {self.p0}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lam must lie in (0, 1], got {self.lam}")
        if self.r_max is not None and self.r_max < 0:
            raise ValueError(f"r_max must be non-negative, got {self.r_max}")
        cap = self._underflow_cap()
        if cap is not None and (self.r_max is None or cap < self.r_max):
            object.__setattr__(self, "r_max", cap)

    def _underflow_cap(self) -> int | None:
        if self.lam == 1.0:
            return None
        bound = self.r_max if self.r_max is not None else _UNDERFLOW_SCAN_LIMIT
        # g is monotone in r, so the first zero can be found by bisection,
        # but the bound is small enough that a geometric probe suffices.
        if self.p0 * self.lam ** min(bound, _UNDERFLOW_SCAN_LIMIT) > 0.0:
            return None
        lo, hi = 0, min(bound, _UNDERFLOW_SCAN_LIMIT)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.p0 * self.lam**mid > 0.0:
                lo = mid + 1
            else:
                hi = mid
        return lo

    def error_prob(self, r: int) -> float:
        """Decoding-error probability after ``r`` prior attempts."""
        if r < 0:
            raise InadmissibleQueryError(f"attempt count must be non-negative, got {r}")
        if self.r_max is not None and r > self.r_max:
            raise InadmissibleQueryError(
                f"attempt count {r} exceeds the model's r_max={self.r_max}"
            )
        return self.p0 * self.lam**r


def error_prob(model: ChannelModel, r: int) -> float:
    return model.error_prob(r)


@dataclass(frozen=True)
class Truncation:
    """Finite approximation bounds: age capped at ``n_max``, attempts at ``r_max``.

    Attempt counts are bounded by the age, so ``r_max`` is normalized to at
    most ``n_max - 1``; larger values would name states that cannot exist.
    """

    n_max: int
    r_max: int

    def __post_init__(self):
        if self.n_max < 2:
            raise ValueError(f"n_max must be at least 2, got {self.n_max}")
        if self.r_max < 0:
            raise ValueError(f"r_max must be non-negative, got {self.r_max}")
        if self.r_max >= self.n_max:
            object.__setattr__(self, "r_max", self.n_max - 1)


def effective_r_max(model: ChannelModel, trunc: Truncation) -> int:
    """Attempt-count cap actually in force: the tighter of model and truncation."""
    if model.r_max is None:
        return trunc.r_max
    return min(model.r_max, trunc.r_max)


def is_admissible_state(s: State, trunc: Truncation, r_cap: int | None = None) -> bool:
    cap = trunc.r_max if r_cap is None else r_cap
    return 1 <= s.delta <= trunc.n_max and 0 <= s.r < min(s.delta, cap + 1)


def admissible_actions(s: State, model: ChannelModel, trunc: Truncation) -> tuple[Action, ...]:
    """Actions allowed in ``s``.

    Retransmission requires a failed packet in flight (``r >= 1``) and room
    for one more combining attempt (``r < r_max``); it is forbidden at the
    cap so the error profile is never extrapolated.
    """
    if 1 <= s.r < effective_r_max(model, trunc):
        return (Action.IDLE, Action.NEW_UPDATE, Action.RETRANSMIT)
    return (Action.IDLE, Action.NEW_UPDATE)


def stage_cost(s: State, a: Action, eta: float) -> float:
    """Per-slot cost: the age plus ``eta`` whenever a transmission is made."""
    return float(s.delta) + (eta if a.transmits else 0.0)


def transitions(
    s: State, a: Action, model: ChannelModel, trunc: Truncation
) -> list[TransitionEntry]:
    """Exact transition support of ``(s, a)`` in the truncated chain.

    Ages exceeding ``n_max`` are clamped (self-loop in age); the attempt
    count never needs clamping except for a fresh update under ``r_max = 0``,
    where the failed-attempt marker collapses back to 0.
    """
    r_cap = effective_r_max(model, trunc)
    if not is_admissible_state(s, trunc, r_cap):
        raise InadmissibleActionError(f"state {s} is not admissible under {trunc}")
    if a not in admissible_actions(s, model, trunc):
        raise InadmissibleActionError(f"action {a.name} is not admissible in state {s}")

    up = min(s.delta + 1, trunc.n_max)
    if a is Action.IDLE:
        return [TransitionEntry(State(up, 0), 1.0)]
    if a is Action.NEW_UPDATE:
        g = model.error_prob(0)
        entries = [
            TransitionEntry(State(up, min(1, r_cap)), g),
            TransitionEntry(State(1, 0), 1.0 - g),
        ]
    else:
        g = model.error_prob(s.r)
        entries = [
            TransitionEntry(State(up, s.r + 1), g),
            TransitionEntry(State(s.r + 1, 0), 1.0 - g),
        ]
    return [e for e in entries if e.prob > 0.0]


def enumerate_states(trunc: Truncation) -> list[State]:
    """All admissible states, row-major by age then attempt count."""
    return [
        State(delta, r)
        for delta in range(1, trunc.n_max + 1)
        for r in range(min(delta, trunc.r_max + 1))
    ]


class StateSpace:
    """Dense indexing of the truncated state set plus transition arrays.

    Precomputes, for every (state, action), the at-most-two successor indices
    and probabilities, which is what the value-iteration sweeps and the
    stationary-distribution builder consume.
    """

    def __init__(self, model: ChannelModel, trunc: Truncation):
        self.model = model
        self.trunc = trunc
        self.r_cap = effective_r_max(model, trunc)
        self.states = enumerate_states(Truncation(trunc.n_max, self.r_cap))
        self.index = {s: i for i, s in enumerate(self.states)}
        n = len(self.states)
        self.delta = np.array([s.delta for s in self.states], dtype=np.float64)
        self.n_actions = len(Action)
        self.succ_idx = np.zeros((n, self.n_actions, 2), dtype=np.int64)
        self.succ_prob = np.zeros((n, self.n_actions, 2), dtype=np.float64)
        self.admissible = np.zeros((n, self.n_actions), dtype=bool)
        for i, s in enumerate(self.states):
            for a in admissible_actions(s, model, trunc):
                self.admissible[i, a] = True
                for k, (nxt, prob) in enumerate(transitions(s, a, model, trunc)):
                    self.succ_idx[i, a, k] = self.index[nxt]
                    self.succ_prob[i, a, k] = prob

    def __len__(self) -> int:
        return len(self.states)
