"""Uniformization-based model checking of time-bounded measures.

Supported measures: time-bounded reachability of a label within a horizon,
interval reachability (first visit to the label inside a time window, staying
outside the label until then), and instantaneous expected reward at a time
point.  Transient distributions are computed by uniformization: with
Lambda >= max leaving rate, pi_t = sum_k Poi(Lambda*t; k) * pi_0 P^k where
P = I + Q/Lambda.  Poisson weights are accumulated by a stable mode-outward
recurrence and truncated once terms fall below 1e-30 of the peak, so the
discarded mass is far below any supported tolerance; the retained weights are
renormalized.

On partial models every measure is computed twice: the truncated sink counts
as a target (best case) for the upper bound and as a non-target (worst case)
for the lower bound, yielding sound two-sided bounds on the exact solution.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import sparse

from .model import (
    ConcreteCtmc,
    ParametricCtmc,
    Valuation,
    build_full,
    build_partial,
    cluster_valuations,
    _structure,
)
from . import expr as ex

MIN_EPSILON = 1e-12
_POISSON_CUTOFF = 1e-30
_DELTA_FLOOR = 1e-250


class CheckerError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeBoundedReach:
    id: str
    target: str
    horizon: float

    def __post_init__(self):
        if self.horizon < 0:
            raise CheckerError(f"measure {self.id}: horizon must be >= 0")


@dataclass(frozen=True)
class IntervalReach:
    id: str
    target: str
    t_lo: float
    t_hi: float

    def __post_init__(self):
        if not 0 <= self.t_lo <= self.t_hi:
            raise CheckerError(f"measure {self.id}: need 0 <= t1 <= t2")


@dataclass(frozen=True)
class InstantReward:
    id: str
    reward: str
    time: float

    def __post_init__(self):
        if self.time < 0:
            raise CheckerError(f"measure {self.id}: time must be >= 0")


Measure = Union[TimeBoundedReach, IntervalReach, InstantReward]


@dataclass(frozen=True)
class MeasureSet:
    """Ordered measures; solution vectors are indexed in this order."""

    measures: tuple[Measure, ...]

    def __post_init__(self):
        ids = [m.id for m in self.measures]
        if len(set(ids)) != len(ids):
            raise CheckerError("measure ids must be unique")

    def __len__(self) -> int:
        return len(self.measures)

    def __iter__(self):
        return iter(self.measures)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.measures)


@dataclass(eq=False)
class SolutionVector:
    valuation_index: int
    values: np.ndarray


@dataclass(eq=False)
class IntervalSolution:
    valuation_index: int
    lower: np.ndarray
    upper: np.ndarray
    delta: float
    gap_met: bool = True

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


# ---------------------------------------------------------------------------
# Uniformization core
# ---------------------------------------------------------------------------

def _check_epsilon(epsilon: float):
    if epsilon < MIN_EPSILON:
        raise CheckerError(f"epsilon {epsilon} below float accumulation limit {MIN_EPSILON}")
    if epsilon <= 0:
        raise CheckerError("epsilon must be positive")


def _mask(c: ConcreteCtmc, target: Union[str, np.ndarray]) -> np.ndarray:
    if isinstance(target, str):
        return c.label_mask(target)
    return np.asarray(target, dtype=bool)


def _uniformized(c: ConcreteCtmc, absorbing: Optional[np.ndarray] = None):
    """Transposed uniformized DTMC matrix and the uniformization rate.

    Rows of absorbing states are frozen (their outflow removed); self-loops
    cancel in the generator, so they never affect the result.
    """
    rates = c.rates
    n = rates.shape[0]
    if absorbing is not None and absorbing.any():
        keep = sparse.diags((~absorbing).astype(float))
        rates = keep @ rates
    row_sums = np.asarray(rates.sum(axis=1)).ravel()
    diag = rates.diagonal()
    leaving = row_sums - diag
    lam = float(leaving.max()) if n else 0.0
    if lam <= 0.0:
        return None, 0.0
    q = rates - sparse.diags(row_sums)
    p = sparse.identity(n, format="csr") + q.tocsr() / lam
    return p.transpose().tocsr(), lam


def _poisson_terms(lam_t: float, epsilon: float) -> tuple[int, np.ndarray]:
    """Left truncation point and renormalized Poisson(lam_t) weights."""
    if lam_t <= 0.0:
        return 0, np.array([1.0])
    mode = int(lam_t)
    right = [1.0]
    w, k = 1.0, mode
    while w > _POISSON_CUTOFF:
        k += 1
        w *= lam_t / k
        right.append(w)
    left = []
    w, k = 1.0, mode
    while k > 0:
        w *= k / lam_t
        k -= 1
        if w <= _POISSON_CUTOFF:
            break
        left.append(w)
    weights = np.array(left[::-1] + right)
    weights /= weights.sum()
    return mode - len(left), weights


def transient_distribution(c: ConcreteCtmc, t: float, epsilon: float = 1e-6,
                           initial: Optional[np.ndarray] = None,
                           absorbing: Optional[np.ndarray] = None) -> np.ndarray:
    """Transient distribution pi_t with L1 error below epsilon."""
    _check_epsilon(epsilon)
    if t < 0:
        raise CheckerError("t must be >= 0")
    v = np.array(c.initial if initial is None else initial, dtype=float)
    if t == 0.0:
        return v
    pt, lam = _uniformized(c, absorbing)
    if lam == 0.0:
        return v
    k_lo, weights = _poisson_terms(lam * t, epsilon)
    out = np.zeros_like(v)
    for _ in range(k_lo):
        v = pt @ v
    for w in weights:
        out += w * v
        v = pt @ v
    return out


def _first_passage(c: ConcreteCtmc, start: np.ndarray, targets: np.ndarray,
                   horizons: Sequence[float], epsilon: float) -> np.ndarray:
    """P(first visit to targets within each horizon), targets made absorbing.

    One power-sequence pass serves every horizon: the target mass after k
    jumps is shared, only the Poisson weights differ per horizon.
    """
    _check_epsilon(epsilon)
    horizons = np.asarray(horizons, dtype=float)
    if np.any(horizons < 0):
        raise CheckerError("horizons must be >= 0")
    pt, lam = _uniformized(c, absorbing=targets)
    base = float(start[targets].sum()) if targets.any() else 0.0
    if lam == 0.0 or horizons.size == 0:
        return np.full(horizons.shape, base)

    terms = [_poisson_terms(lam * t, epsilon) for t in horizons]
    k_max = max(k_lo + len(w) - 1 for k_lo, w in terms)
    target_mass = np.empty(k_max + 1)
    v = np.array(start, dtype=float)
    for k in range(k_max + 1):
        target_mass[k] = v[targets].sum()
        v = pt @ v

    out = np.empty(horizons.shape)
    for j, (k_lo, weights) in enumerate(terms):
        if horizons[j] == 0.0:
            out[j] = base
        else:
            out[j] = float(weights @ target_mass[k_lo:k_lo + len(weights)])
    return np.clip(out, 0.0, None)


def reach_probabilities(c: ConcreteCtmc, target: Union[str, np.ndarray],
                        horizons: Sequence[float], epsilon: float = 1e-6,
                        initial: Optional[np.ndarray] = None) -> np.ndarray:
    """Time-bounded reachability for a family of horizons (one shared pass)."""
    mask = _mask(c, target)
    start = c.initial if initial is None else initial
    return np.clip(_first_passage(c, start, mask, horizons, epsilon), 0.0, 1.0)


def reach_probability(c: ConcreteCtmc, target: Union[str, np.ndarray], tau: float,
                      epsilon: float = 1e-6) -> float:
    return float(reach_probabilities(c, target, [tau], epsilon)[0])


def _interval_core(c: ConcreteCtmc, target_mask: np.ndarray, t_lo: float,
                   t_his: Sequence[float], epsilon: float,
                   keep_extra: Optional[np.ndarray] = None,
                   final_extra: Optional[np.ndarray] = None) -> np.ndarray:
    """Two-phase interval-until: stay outside the target until the window opens.

    Phase one runs to t_lo with the target absorbing; mass sitting in the
    target at t_lo broke the left operand and is dropped (paths must avoid the
    target strictly before the window).  Phase two computes first passage into
    the target within t_hi - t_lo.  ``keep_extra``/``final_extra`` widen the
    restriction and the counted set (used for the optimistic sink treatment on
    partial models).
    """
    t_his = np.asarray(t_his, dtype=float)
    if np.any(t_his < t_lo):
        raise CheckerError("interval windows need t1 <= t2")
    if t_lo == 0.0:
        start = np.array(c.initial, dtype=float)
    else:
        pi = transient_distribution(c, t_lo, epsilon / 2.0, absorbing=target_mask)
        keep = ~target_mask
        if keep_extra is not None:
            keep = keep | keep_extra
        start = np.where(keep, pi, 0.0)
    final = target_mask if final_extra is None else (target_mask | final_extra)
    phase2_eps = epsilon if t_lo == 0.0 else epsilon / 2.0
    return np.clip(_first_passage(c, start, final, t_his - t_lo, phase2_eps), 0.0, 1.0)


def interval_reaches(c: ConcreteCtmc, target: Union[str, np.ndarray], t_lo: float,
                     t_his: Sequence[float], epsilon: float = 1e-6) -> np.ndarray:
    """P(first visit to target happens inside [t_lo, t_hi]) per t_hi."""
    return _interval_core(c, _mask(c, target), t_lo, t_his, epsilon)


def interval_reach(c: ConcreteCtmc, target: Union[str, np.ndarray], t_lo: float,
                   t_hi: float, epsilon: float = 1e-6) -> float:
    return float(interval_reaches(c, target, t_lo, [t_hi], epsilon)[0])


def instant_reward(c: ConcreteCtmc, reward: Union[str, np.ndarray], t: float,
                   epsilon: float = 1e-6) -> float:
    """Expected state reward at time t: dot(pi_t, reward vector)."""
    vec = c.reward_vector(reward) if isinstance(reward, str) else np.asarray(reward, float)
    pi = transient_distribution(c, t, epsilon)
    return float(pi @ vec)


# ---------------------------------------------------------------------------
# Measure-set evaluation (exact chains and partial-model bounds)
# ---------------------------------------------------------------------------

def _sink_onehot(c: ConcreteCtmc) -> np.ndarray:
    mask = np.zeros(c.num_states, dtype=bool)
    mask[c.num_states - 1] = True
    return mask


def evaluate_measures(c: ConcreteCtmc, measures: MeasureSet, epsilon: float = 1e-6,
                      sink_policy: Optional[str] = None,
                      sink_rewards: Optional[dict] = None) -> np.ndarray:
    """Values of all measures on one chain, grouped to share transient passes.

    ``sink_policy`` is None on full chains; on partial models "upper" counts
    the sink as target (and assigns it the provided worst-case rewards) while
    "lower" counts it as a non-target with reward zero.
    """
    if sink_policy not in (None, "lower", "upper"):
        raise CheckerError(f"unknown sink policy: {sink_policy!r}")
    optimistic = sink_policy == "upper"
    sink = _sink_onehot(c) if sink_policy else None

    values = np.empty(len(measures))
    order = list(enumerate(measures))

    reach_groups: dict = {}
    window_groups: dict = {}
    reward_groups: dict = {}
    for pos, meas in order:
        if isinstance(meas, TimeBoundedReach):
            reach_groups.setdefault(meas.target, []).append(pos)
        elif isinstance(meas, IntervalReach):
            window_groups.setdefault((meas.target, meas.t_lo), []).append(pos)
        else:
            reward_groups.setdefault(meas.time, []).append(pos)

    for target, positions in reach_groups.items():
        mask = c.label_mask(target)
        if optimistic:
            mask = mask | sink
        taus = [measures.measures[p].horizon for p in positions]
        vals = np.clip(_first_passage(c, c.initial, mask, taus, epsilon), 0.0, 1.0)
        for p, v in zip(positions, vals):
            values[p] = v

    for (target, t_lo), positions in window_groups.items():
        mask = c.label_mask(target)
        t_his = [measures.measures[p].t_hi for p in positions]
        vals = _interval_core(
            c, mask, t_lo, t_his, epsilon,
            keep_extra=sink if optimistic else None,
            final_extra=sink if optimistic else None)
        for p, v in zip(positions, vals):
            values[p] = v

    for t, positions in reward_groups.items():
        pi = transient_distribution(c, t, epsilon)
        for p in positions:
            meas = measures.measures[p]
            vec = c.reward_vector(meas.reward)
            if optimistic and sink_rewards is not None:
                vec = vec.copy()
                vec[-1] = sink_rewards.get(meas.reward, 0.0)
            values[p] = max(float(pi @ vec), 0.0)

    return values


def solve_measures(m: ParametricCtmc, u: Valuation, measures: MeasureSet,
                   epsilon: float = 1e-6, index: int = 0) -> SolutionVector:
    """Exact (up to epsilon) solution vector for one valuation."""
    chain = build_full(m, u)
    return SolutionVector(index, evaluate_measures(chain, measures, epsilon))


def _worst_case_rewards(m: ParametricCtmc) -> dict:
    """Sound per-reward upper bound over the whole variable box (sink reward)."""
    box = {v.name: (v.minimum, v.maximum) for v in m.variables}
    out = {}
    for name, reward in m.rewards.items():
        _, hi = ex.bounds(reward, box)
        out[name] = max(float(hi), 0.0)
    return out


def _bound_at_delta(m: ParametricCtmc, u: Valuation, measures: MeasureSet,
                    delta: float, epsilon: float, reuse=None):
    partial = build_partial(m, u, delta, reuse=reuse)
    sink_rewards = _worst_case_rewards(m)
    lower = evaluate_measures(partial, measures, epsilon, sink_policy="lower")
    upper = evaluate_measures(partial, measures, epsilon, sink_policy="upper",
                              sink_rewards=sink_rewards)
    # Float noise from two separate analyses may invert a (near-)exact pair.
    upper = np.maximum(upper, lower)
    return lower, upper, partial


def _gaps_met(lower: np.ndarray, upper: np.ndarray, rel_gap: float) -> bool:
    rel = (upper - lower) / np.maximum(upper, 1e-12)
    return bool(np.all(rel <= rel_gap))


def bound_measures(m: ParametricCtmc, u: Valuation, measures: MeasureSet,
                   delta: float = 1e-2, epsilon: float = 1e-6,
                   rel_gap: float = 1e-2, reuse=None, index: int = 0) -> IntervalSolution:
    """Two-sided measure bounds from partial models, tightened until the
    relative gap (upper-lower)/max(upper, 1e-12) meets rel_gap per entry.

    The truncation threshold is divided by 10 per round; if it underflows the
    best interval so far is returned with ``gap_met=False``.  Bounds from
    successive rounds are intersected, so intervals only ever shrink.
    """
    lower = np.full(len(measures), -np.inf)
    upper = np.full(len(measures), np.inf)
    delta_now = delta
    first = True
    while True:
        lo, up, partial = _bound_at_delta(m, u, measures, delta_now, epsilon,
                                          reuse=reuse if first else None)
        first = False
        lower = np.maximum(lower, lo)
        upper = np.minimum(upper, up)
        if _gaps_met(lower, upper, rel_gap) or not partial.sink_reachable:
            return IntervalSolution(index, lower, upper, delta_now, gap_met=True)
        if delta_now < _DELTA_FLOOR:
            return IntervalSolution(index, lower, upper, delta_now, gap_met=False)
        delta_now /= 10.0


def refine_solution(prev: IntervalSolution, m: ParametricCtmc, u: Valuation,
                    measures: MeasureSet, epsilon: float = 1e-6) -> IntervalSolution:
    """One refinement step: re-run the bound analysis at delta/10 and intersect,
    so the result is pointwise contained in the previous interval."""
    delta_new = prev.delta / 10.0
    lo, up, _ = _bound_at_delta(m, u, measures, delta_new, epsilon)
    lower = np.maximum(prev.lower, lo)
    upper = np.minimum(prev.upper, up)
    upper = np.maximum(upper, lower)
    return IntervalSolution(prev.valuation_index, lower, upper, delta_new,
                            gap_met=prev.gap_met)


def solve_measure_set(m: ParametricCtmc, valuations, measures: MeasureSet,
                      mode: str = "exact", epsilon: float = 1e-6,
                      delta: float = 1e-2, rel_gap: float = 1e-2,
                      threads: int = 1, cluster_radius: float = 0.0):
    """Solution vectors (or interval solutions) for a batch of valuations.

    Results are ordered by valuation index and do not depend on the worker
    count.  In approx mode a positive ``cluster_radius`` groups nearby
    valuations (standardized Euclidean distance) and reuses the representative
    partial model's retained state set for every member of the cluster.
    """
    if hasattr(valuations, "valuations"):
        valuations = valuations.valuations
    valuations = list(valuations)
    if mode not in ("exact", "approx"):
        raise CheckerError(f"unknown mode: {mode!r}")
    _structure(m)  # build the shared reachable graph once, outside the pool

    reuse_map: dict = {}
    if mode == "approx" and cluster_radius > 0.0:
        clusters = cluster_valuations(valuations, cluster_radius, m.parameters)
        for cluster in clusters:
            rep_partial = build_partial(m, cluster.representative, delta)
            cluster.retained_state_set = rep_partial.retained_states
            for idx in cluster.member_indices:
                reuse_map[idx] = rep_partial.retained_states

    def work(i: int):
        if mode == "exact":
            return solve_measures(m, valuations[i], measures, epsilon, index=i)
        return bound_measures(m, valuations[i], measures, delta, epsilon,
                              rel_gap, reuse=reuse_map.get(i), index=i)

    indices = range(len(valuations))
    if threads <= 1:
        return [work(i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, indices))


# ---------------------------------------------------------------------------
# Probability-curve bands
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class CurveBand:
    """Monotone band around probability curves over a horizon grid.

    ``lower``/``upper`` are the sound step levels at each horizon; between
    grid points the lower level carries forward and the upper level carries
    backward.  ``evaluate(t, smooth=True)`` linearly interpolates instead,
    which is a plotting aid rather than a sound bound.
    """

    horizons: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def evaluate(self, t: float, smooth: bool = False) -> tuple[float, float]:
        h = self.horizons
        if smooth:
            return (float(np.interp(t, h, self.lower)),
                    float(np.interp(t, h, self.upper)))
        if t <= h[0]:
            lo = self.lower[0] if t == h[0] else 0.0
            return float(lo), float(self.upper[0])
        if t >= h[-1]:
            hi = float(self.upper[-1]) if t == h[-1] else 1.0
            return float(self.lower[-1]), hi
        j = int(np.searchsorted(h, t, side="right")) - 1
        k = int(np.searchsorted(h, t, side="left"))
        return float(self.lower[j]), float(self.upper[k])


def region_to_curve(region, measures: MeasureSet) -> CurveBand:
    """Band around the probability curves from a box region over horizon measures.

    Requires a horizon family: reach measures with one shared target and
    strictly ascending horizons, or interval-reach measures sharing target and
    window start with strictly ascending window ends.  The lower curve is the
    running max of the region's lower bounds, the upper curve the suffix min
    of its upper bounds; both are therefore nondecreasing, clamped to [0, 1].
    """
    kinds = {type(m) for m in measures}
    if len(measures) == 0 or len(kinds) != 1:
        raise CheckerError("measures are not a horizon family")
    kind = kinds.pop()
    if kind is TimeBoundedReach:
        if len({m.target for m in measures}) != 1:
            raise CheckerError("horizon family must share one target")
        horizons = np.array([m.horizon for m in measures], dtype=float)
    elif kind is IntervalReach:
        if len({(m.target, m.t_lo) for m in measures}) != 1:
            raise CheckerError("horizon family must share target and window start")
        horizons = np.array([m.t_hi for m in measures], dtype=float)
    else:
        raise CheckerError("measures are not a horizon family")
    if np.any(np.diff(horizons) <= 0):
        raise CheckerError("horizons must be strictly ascending")

    lower = np.maximum.accumulate(np.clip(region.lower, 0.0, 1.0))
    upper = np.minimum.accumulate(np.clip(region.upper, 0.0, 1.0)[::-1])[::-1]
    upper = np.maximum(upper, lower)
    return CurveBand(horizons, lower, upper)
