"""Exact long-run averages of a policy via its stationary distribution.

The induced chain is restricted to the states reachable from the renewal
state (1, 0); its unique closed recurrent class is located by a strong
connectivity decomposition and the stationary distribution is obtained from
a direct linear solve.  Renewal mixtures combine the component chains by
expected cycle length, which is exactly what redrawing the active policy at
every visit to (1, 0) achieves.  The open-loop periodic baseline has a
closed-form evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import MultichainError, NoStationaryAoIError
from .mdp import Action, ChannelModel, State, StateSpace, Truncation, transitions
from .policies import PeriodicPolicy, Policy, RenewalMixture

_STATIONARY_RESIDUAL = 1e-10
_DENSE_CLASS_LIMIT = 2500
_RENEWAL = State(1, 0)


@dataclass(frozen=True)
class EvalResult:
    """Long-run average age, average transmission rate, and state occupancy."""

    avg_aoi: float
    avg_cost: float
    stationary: dict[State, float]


def induced_chain(
    policy: Policy, model: ChannelModel, trunc: Truncation
) -> tuple[StateSpace, sp.csr_matrix, np.ndarray]:
    """Transition matrix of the chain under ``policy`` plus per-state transmit probability."""
    space = StateSpace(model, trunc)
    n = len(space)
    rows, cols, vals = [], [], []
    tx = np.zeros(n)
    for i, s in enumerate(space.states):
        for a, pa in policy.action_probs(s).items():
            if pa <= 0.0:
                continue
            if not space.admissible[i, a]:
                raise NoStationaryAoIError(
                    f"policy assigns inadmissible action {Action(a).name} at {s}"
                )
            if a != Action.IDLE:
                tx[i] += pa
            for nxt, p in transitions(s, a, model, trunc):
                rows.append(i)
                cols.append(space.index[nxt])
                vals.append(pa * p)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return space, P, tx


def _closed_class(space: StateSpace, P: sp.csr_matrix) -> np.ndarray:
    """Indices of the unique closed recurrent class reachable from (1, 0)."""
    start = space.index[_RENEWAL]
    order = breadth_first_order(P, start, directed=True, return_predecessors=False)
    reach = np.zeros(len(space), dtype=bool)
    reach[order] = True
    sub = P[np.ix_(order, order)]
    n_comp, labels = connected_components(sub, directed=True, connection="strong")
    # A component is closed iff no probability mass leaves it.
    leaving = np.zeros(n_comp)
    coo = sub.tocoo()
    np.add.at(leaving, labels[coo.row], np.where(labels[coo.row] != labels[coo.col], coo.data, 0.0))
    closed = np.flatnonzero(leaving < 1e-14)
    if len(closed) == 0:
        raise MultichainError("no closed recurrent class found (empty chain?)")
    if len(closed) > 1:
        raise MultichainError(
            f"{len(closed)} closed recurrent classes reachable from (1, 0); averages are ambiguous"
        )
    members = order[labels == closed[0]]
    return np.sort(members)


def _stationary_on_class(P: sp.csr_matrix, members: np.ndarray) -> np.ndarray:
    Pc = P[np.ix_(members, members)]
    m = len(members)
    if m == 1:
        return np.ones(1)
    if m <= _DENSE_CLASS_LIMIT:
        A = Pc.toarray().T - np.eye(m)
        A[-1, :] = 1.0
        b = np.zeros(m)
        b[-1] = 1.0
        pi = np.linalg.solve(A, b)
    else:
        A = sp.lil_matrix(Pc.T - sp.eye(m))
        A[m - 1, :] = 1.0
        b = np.zeros(m)
        b[-1] = 1.0
        pi = sp.linalg.spsolve(A.tocsc(), b)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = np.abs(pi @ Pc - pi).max()
    if residual > _STATIONARY_RESIDUAL:
        raise MultichainError(f"stationary solve residual {residual:.3e} too large")
    return pi


def _evaluate_chain(policy: Policy, model: ChannelModel, trunc: Truncation) -> EvalResult:
    space, P, tx = induced_chain(policy, model, trunc)
    members = _closed_class(space, P)
    if tx[members].max() <= 0.0:
        raise NoStationaryAoIError(
            "policy never transmits on its recurrent class; the age diverges"
        )
    pi = _stationary_on_class(P, members)
    deltas = space.delta[members]
    avg_aoi = float(pi @ deltas)
    avg_cost = float(pi @ tx[members])
    stationary = {space.states[j]: float(pi[k]) for k, j in enumerate(members)}
    return EvalResult(avg_aoi, avg_cost, stationary)


def _evaluate_periodic(policy: PeriodicPolicy, model: ChannelModel) -> EvalResult:
    # Renewal argument over transmission epochs: with period k and error p,
    # the age right after m consecutive failures spans one block of k ages,
    # so age a occurs with probability (1-p) * p**((a-1)//k) / k.
    k = policy.period
    p = model.error_prob(0)
    q = 1.0 - p
    avg_cost = 1.0 / k
    avg_aoi = (k + 1) / 2.0 + k * p / q
    stationary: dict[State, float] = {}
    r_fail = min(1, model.r_max) if model.r_max is not None else 1
    m = 0
    while True:
        block = q * p**m / k
        if block * k < 1e-15:
            break
        for a in range(k * m + 1, k * (m + 1) + 1):
            # The first age of every failed block follows a NACK, so it
            # carries the failed-attempt marker.
            r = r_fail if (m >= 1 and a == k * m + 1) else 0
            stationary[State(a, r)] = block
        m += 1
    return EvalResult(avg_aoi, avg_cost, stationary)


def evaluate_exact(policy: Policy, model: ChannelModel, trunc: Truncation) -> EvalResult:
    """Exact average age and transmission rate of ``policy`` on the truncated chain."""
    if isinstance(policy, PeriodicPolicy):
        return _evaluate_periodic(policy, model)
    if isinstance(policy, RenewalMixture):
        first = evaluate_exact(policy.first, model, trunc)
        second = evaluate_exact(policy.second, model, trunc)
        w = policy.weight_first
        if w >= 1.0:
            return first
        if w <= 0.0:
            return second
        p1 = first.stationary.get(_RENEWAL, 0.0)
        p2 = second.stationary.get(_RENEWAL, 0.0)
        if p1 <= 0.0 or p2 <= 0.0:
            raise NoStationaryAoIError(
                "renewal mixture requires (1, 0) to be recurrent under both components"
            )
        # Expected cycle length is 1/pi(1,0); cycles weighted by how often
        # each component is drawn and how long its cycles run.
        t1, t2 = 1.0 / p1, 1.0 / p2
        denom = w * t1 + (1.0 - w) * t2
        avg_aoi = (w * t1 * first.avg_aoi + (1.0 - w) * t2 * second.avg_aoi) / denom
        avg_cost = (w * t1 * first.avg_cost + (1.0 - w) * t2 * second.avg_cost) / denom
        stationary: dict[State, float] = {}
        for res, wt in ((first, w * t1 / denom), (second, (1.0 - w) * t2 / denom)):
            for s, mass in res.stationary.items():
                stationary[s] = stationary.get(s, 0.0) + wt * mass
        return EvalResult(avg_aoi, avg_cost, stationary)
    return _evaluate_chain(policy, model, trunc)


def arq_eval_truncation(p: float, threshold: int, tail_mass: float = 1e-13) -> Truncation:
    """Age cap making the geometric tail beyond ``threshold`` smaller than ``tail_mass``."""
    if p <= 0.0:
        extra = 2
    else:
        extra = int(np.ceil(np.log(tail_mass) / np.log(p))) + 2
    return Truncation(n_max=threshold + max(extra, 2), r_max=0)


def renewal_mixture_weight(
    first: EvalResult, second: EvalResult, c_max: float
) -> float:
    """Redraw probability of ``first`` so the mixture's exact cost equals ``c_max``.

    Corrects the chord weight for unequal expected cycle lengths: drawing a
    policy per cycle weights its averages by how long its cycles last.
    """
    c1, c2 = first.avg_cost, second.avg_cost
    if not c2 <= c_max <= c1:
        raise ValueError(f"budget {c_max} not bracketed by component costs [{c2}, {c1}]")
    if abs(c1 - c2) < 1e-15:
        return 1.0
    t1 = 1.0 / first.stationary[_RENEWAL]
    t2 = 1.0 / second.stationary[_RENEWAL]
    num = t2 * (c_max - c2)
    den = t1 * (c1 - c_max) + num
    if den <= 0.0:
        return 1.0
    return float(min(1.0, max(0.0, num / den)))
