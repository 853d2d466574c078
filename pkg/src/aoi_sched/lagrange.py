"""Multiplier search and construction of the budget-optimal randomized policy.

The transmission rate of the multiplier-optimal policy is piecewise constant
and non-increasing in the charge ``eta``.  The search first runs the
stochastic-approximation update ``eta += step * (cost - budget)`` with a
1/(m+1) schedule, falls back to geometric expansion if that fails to bracket
the budget, then bisects the bracket tight so the two endpoint policies are
adjacent optima.  Mixing those two policies to meet the budget with equality
yields the constrained optimum: in a single state when the tables differ in
exactly one, otherwise by redrawing the active policy at every visit to the
renewal state (1, 0).

The reported mixture coefficient ``mu`` is the chord weight in cost space
between the two policies' (cost, age) points, which is also the weight
placing the achieved age on the lower convex hull of those points.  The
randomization probability actually executed is corrected for unequal
expected renewal-cycle lengths so that the exact stationary cost equals the
budget, not just its once-drawn expectation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from scipy.optimize import brentq

from .errors import BracketingError, EtaSearchError
from .exact import EvalResult, evaluate_exact, renewal_mixture_weight
from .mdp import ChannelModel, State, Truncation
from .policies import (
    DeterministicTable,
    Policy,
    RandomizedTable,
    RenewalMixture,
    table_difference,
)
from .rvi import SolverConfig, SolverOutput, solve


@dataclass(frozen=True)
class EtaSearchConfig:
    eta0: float = 1.0
    step0: float | None = None  # None: scaled to 2/budget**2
    stop_tol: float = 1e-9
    xi: float = 0.2
    max_steps: int = 40
    refine_tol: float = 1e-6

    def __post_init__(self):
        if self.xi <= 0.0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        if self.stop_tol <= 0.0:
            raise ValueError(f"stop_tol must be positive, got {self.stop_tol}")


@dataclass(frozen=True)
class TraceRow:
    step: int
    eta: float
    avg_cost: float
    avg_aoi: float
    gain: float
    phase: str


@dataclass(frozen=True)
class EtaSearchResult:
    eta_star: float
    bracket: tuple[float, float]
    trace: tuple[TraceRow, ...]
    exact_hit: bool  # a multiplier with cost == budget (within stop_tol) was found


@dataclass(frozen=True)
class ConstrainedSolution:
    eta_star: float
    policy_low: DeterministicTable
    policy_high: DeterministicTable
    mu: float
    mixed: Policy
    achieved_cost: float
    achieved_aoi: float
    search: EtaSearchResult = field(repr=False)


class _EtaOracle:
    """Caches (solve + exact evaluation) per multiplier, warm-starting the sweeps."""

    def __init__(self, model, trunc, solver_cfg):
        self.model = model
        self.trunc = trunc
        self.solver_cfg = solver_cfg or SolverConfig()
        self._cache: dict[float, tuple[SolverOutput, EvalResult]] = {}
        self._last_h = None

    def __call__(self, eta: float) -> tuple[SolverOutput, EvalResult]:
        eta = float(eta)
        hit = self._cache.get(eta)
        if hit is not None:
            return hit
        out = solve(self.model, self.trunc, eta, self.solver_cfg, h0=self._last_h)
        self._last_h = out.h_array
        res = evaluate_exact(out.policy, self.model, self.trunc)
        self._cache[eta] = (out, res)
        return out, res


def mixture_weight(c_low: float, c_high: float, c_max: float) -> float:
    """Chord weight on the costlier policy so the mixed cost meets the budget."""
    if c_low < c_high:
        raise BracketingError(f"expected c_low >= c_high, got {c_low} < {c_high}")
    if not c_high <= c_max <= c_low:
        raise BracketingError(f"budget {c_max} outside the policy costs [{c_high}, {c_low}]")
    if c_low == c_high:
        return 1.0
    return (c_max - c_high) / (c_low - c_high)


def search_eta_star(
    model: ChannelModel,
    trunc: Truncation,
    c_max: float,
    cfg: EtaSearchConfig | None = None,
    solver_cfg: SolverConfig | None = None,
    *,
    _oracle: "_EtaOracle | None" = None,
) -> EtaSearchResult:
    """Locate the smallest multiplier whose optimal policy meets the budget.

    Returns the midpoint of a tight bracket around the jump of the cost
    curve across ``c_max`` (or the multiplier hitting the budget exactly).
    """
    if not 0.0 < c_max <= 1.0:
        raise ValueError(f"budget must lie in (0, 1], got {c_max}")
    cfg = cfg or EtaSearchConfig()
    oracle = _oracle or _EtaOracle(model, trunc, solver_cfg)
    step0 = cfg.step0 if cfg.step0 is not None else 2.0 / c_max**2
    trace: list[TraceRow] = []
    lo = None  # largest eta seen with cost > budget
    hi = None  # smallest eta seen with cost <= budget

    def probe(eta: float, step: int, phase: str) -> float:
        out, res = oracle(eta)
        trace.append(TraceRow(step, eta, res.avg_cost, res.avg_aoi, out.gain, phase))
        return res.avg_cost

    def note(eta: float, cost: float):
        nonlocal lo, hi
        if cost > c_max:
            lo = eta if lo is None else max(lo, eta)
        else:
            hi = eta if hi is None else min(hi, eta)

    eta = max(0.0, cfg.eta0)
    step_idx = 0
    for m in range(cfg.max_steps):
        cost = probe(eta, step_idx, "sa")
        step_idx += 1
        if abs(cost - c_max) <= cfg.stop_tol:
            return EtaSearchResult(eta, (eta, eta), tuple(trace), True)
        note(eta, cost)
        if lo is not None and hi is not None:
            break
        eta = max(0.0, eta + step0 / (m + 1) * (cost - c_max))
    if lo is None or hi is None:
        # Geometric fallback: cost is monotone in eta, so expanding the probe
        # always brackets a finite jump across the budget.
        base = max(1.0, 2.0 * cfg.eta0)
        for k in range(60):
            if lo is None:
                cost = probe(0.0, step_idx, "expand")
                step_idx += 1
                if abs(cost - c_max) <= cfg.stop_tol:
                    return EtaSearchResult(0.0, (0.0, 0.0), tuple(trace), True)
                note(0.0, cost)
            if hi is None:
                eta = base * 2.0**k
                cost = probe(eta, step_idx, "expand")
                step_idx += 1
                if abs(cost - c_max) <= cfg.stop_tol:
                    return EtaSearchResult(eta, (eta, eta), tuple(trace), True)
                note(eta, cost)
            if lo is not None and hi is not None:
                break
        else:
            raise EtaSearchError("could not bracket the budget", tuple(trace))

    width_tol = cfg.refine_tol * max(1.0, abs(hi))
    while hi - lo > width_tol:
        mid = 0.5 * (lo + hi)
        cost = probe(mid, step_idx, "bisect")
        step_idx += 1
        if abs(cost - c_max) <= cfg.stop_tol:
            return EtaSearchResult(mid, (mid, mid), tuple(trace), True)
        if cost > c_max:
            lo = mid
        else:
            hi = mid
    return EtaSearchResult(0.5 * (lo + hi), (lo, hi), tuple(trace), False)


def _single_state_mix(
    policy_low: DeterministicTable,
    policy_high: DeterministicTable,
    diff_state: State,
    model: ChannelModel,
    trunc: Truncation,
    c_max: float,
) -> tuple[RandomizedTable, EvalResult]:
    """Randomize the one differing state so the exact cost equals the budget."""
    a_low = policy_low.actions[diff_state]
    a_high = policy_high.actions[diff_state]

    def build(w: float) -> RandomizedTable:
        probs = {s: {a: 1.0} for s, a in policy_high.actions.items()}
        if w >= 1.0:
            probs[diff_state] = {a_low: 1.0}
        elif w > 0.0:
            probs[diff_state] = {a_low: w, a_high: 1.0 - w}
        return RandomizedTable(probs, policy_high.trunc)

    def gap(w: float) -> float:
        return evaluate_exact(build(w), model, trunc).avg_cost - c_max

    g0, g1 = gap(0.0), gap(1.0)
    if g0 > 0.0 or g1 < 0.0:
        raise BracketingError(
            f"single-state randomization cannot reach the budget: costs [{g0 + c_max}, {g1 + c_max}]"
        )
    if abs(g0) < 1e-13:
        w = 0.0
    elif abs(g1) < 1e-13:
        w = 1.0
    else:
        w = brentq(gap, 0.0, 1.0, xtol=1e-13, rtol=8.9e-16)
    mixed = build(float(w))
    return mixed, evaluate_exact(mixed, model, trunc)


def solve_constrained(
    model: ChannelModel,
    trunc: Truncation,
    c_max: float,
    cfg: EtaSearchConfig | None = None,
    solver_cfg: SolverConfig | None = None,
) -> ConstrainedSolution:
    """Budget-optimal policy: multiplier search plus a one-knob randomization."""
    if not 0.0 < c_max <= 1.0:
        raise ValueError(f"budget must lie in (0, 1], got {c_max}")
    cfg = cfg or EtaSearchConfig()
    solver_cfg = solver_cfg or SolverConfig()

    if c_max >= 1.0:
        # Budget-free mode: idling removed from the action set, no mixture.
        out = solve(model, trunc, 0.0, solver_cfg, unconstrained=True)
        res = evaluate_exact(out.policy, model, trunc)
        search = EtaSearchResult(0.0, (0.0, 0.0), (), True)
        return ConstrainedSolution(
            0.0, out.policy, out.policy, 1.0, out.policy, res.avg_cost, res.avg_aoi, search
        )

    oracle = _EtaOracle(model, trunc, solver_cfg)
    search = search_eta_star(model, trunc, c_max, cfg, solver_cfg, _oracle=oracle)
    eta_star = search.eta_star

    if search.exact_hit:
        out, res = oracle(eta_star)
        return ConstrainedSolution(
            eta_star, out.policy, out.policy, 1.0, out.policy, res.avg_cost, res.avg_aoi, search
        )

    # Policies at eta* -/+ xi, shrinking xi onto the refined bracket; expand by
    # doubling (up to 8x) in the degenerate case where the pair fails to
    # straddle the budget.
    lo_eta = min(search.bracket[0], eta_star - min(cfg.xi, eta_star - search.bracket[0]))
    hi_eta = max(search.bracket[1], eta_star + min(cfg.xi, search.bracket[1] - eta_star))
    out_low, res_low = oracle(lo_eta)
    out_high, res_high = oracle(hi_eta)
    xi_eff = cfg.xi
    attempts = 0
    while not (res_high.avg_cost <= c_max <= res_low.avg_cost):
        attempts += 1
        if attempts > 3:
            raise BracketingError(
                f"policies at eta* +/- {xi_eff:.3g} do not straddle the budget "
                f"({res_high.avg_cost}, {res_low.avg_cost})"
            )
        xi_eff *= 2.0
        if res_low.avg_cost < c_max:
            out_low, res_low = oracle(max(0.0, eta_star - xi_eff))
        if res_high.avg_cost > c_max:
            out_high, res_high = oracle(eta_star + xi_eff)

    policy_low, policy_high = out_low.policy, out_high.policy
    mu = mixture_weight(res_low.avg_cost, res_high.avg_cost, c_max)

    diff = table_difference(policy_low, policy_high)
    if len(diff) == 0:
        mixed: Policy = policy_high
        achieved = res_high
    elif len(diff) == 1:
        mixed, achieved = _single_state_mix(
            policy_low, policy_high, diff[0], model, trunc, c_max
        )
    else:
        w = renewal_mixture_weight(res_low, res_high, c_max)
        mixed = RenewalMixture(policy_low, policy_high, w)
        achieved = evaluate_exact(mixed, model, trunc)
    return ConstrainedSolution(
        eta_star,
        policy_low,
        policy_high,
        mu,
        mixed,
        achieved.avg_cost,
        achieved.avg_aoi,
        search,
    )
