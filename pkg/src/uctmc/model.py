"""Parametric CTMCs as guarded-command programs over bounded integer variables.

A model consists of parameters (each with a sampling distribution), integer
state variables with bounds, and guarded commands ``guard -> rate : updates``.
Instantiating the parameters at a valuation and exploring the guarded commands
from the initial assignment yields an explicit-state CTMC; commands whose
guards hold contribute their (exactly evaluated) rate, and parallel edges to
the same successor are rate-summed.

Guards, updates, labels and rewards range over state variables only, so the
reachable graph is valuation-independent; the graph is explored once per model
and cached, and each valuation only re-instantiates the rates.  Rates are
evaluated as exact rationals so that graph preservation (no symbolically
nonzero rate may become <= 0) is decided without float round-off.

Partial models keep only states whose estimated reachability stays above a
threshold; all truncated transitions are redirected into one absorbing sink,
which downstream analyses treat as best case / worst case to obtain sound
two-sided measure bounds.
"""

from __future__ import annotations

import heapq
import json
import math
import weakref
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import sparse

from . import expr as ex

DEFAULT_STATE_CAP = 10_000_000


class ModelError(ValueError):
    """Schema violation, undeclared identifier, duplicate name, bad bounds."""


class GraphPreservationError(RuntimeError):
    """A symbolically nonzero rate evaluated to <= 0 at the given valuation."""


class StateCapExceeded(RuntimeError):
    """State-space exploration hit the configured cap."""


# ---------------------------------------------------------------------------
# Model data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Normal:
    mean: float
    std: float


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float


Distribution = Union[Normal, Uniform]


@dataclass(frozen=True)
class Parameter:
    name: str
    distribution: Distribution


@dataclass(frozen=True)
class StateVariable:
    name: str
    init: int
    minimum: int
    maximum: int


@dataclass(frozen=True)
class Command:
    guard: ex.GuardExpr
    rate: ex.Expr
    updates: tuple[tuple[str, ex.Expr], ...]


@dataclass(frozen=True, eq=False)
class ParametricCtmc:
    name: str
    parameters: tuple[Parameter, ...]
    variables: tuple[StateVariable, ...]
    commands: tuple[Command, ...]
    labels: Mapping[str, ex.GuardExpr]
    rewards: Mapping[str, ex.Expr]
    init_distribution: Optional[tuple[tuple[tuple[int, ...], Fraction], ...]] = None

    @property
    def parameter_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def initial_states(self) -> tuple[tuple[tuple[int, ...], Fraction], ...]:
        if self.init_distribution is not None:
            return self.init_distribution
        point = tuple(v.init for v in self.variables)
        return ((point, Fraction(1)),)


@dataclass(frozen=True)
class Valuation:
    """One sampled assignment of parameter values, kept as exact rationals."""

    values: tuple[Fraction, ...]

    @classmethod
    def from_floats(cls, values: Sequence[float]) -> "Valuation":
        return cls(tuple(Fraction(float(v)) for v in values))

    def to_floats(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.values)

    @property
    def dimension(self) -> int:
        return len(self.values)


@dataclass
class ValuationCluster:
    representative: Valuation
    members: list[Valuation]
    member_indices: list[int]
    retained_state_set: Optional[tuple[tuple[int, ...], ...]] = None


# ---------------------------------------------------------------------------
# JSON front-end
# ---------------------------------------------------------------------------

def _parse_distribution(payload: dict) -> Distribution:
    kind = payload.get("type")
    if kind == "normal":
        mean, std = float(payload["mean"]), float(payload["std"])
        if std <= 0:
            raise ModelError("normal distribution needs std > 0")
        return Normal(mean, std)
    if kind == "uniform":
        low, high = float(payload["low"]), float(payload["high"])
        if not low < high:
            raise ModelError("uniform distribution needs low < high")
        return Uniform(low, high)
    raise ModelError(f"unknown distribution type: {kind!r}")


def parse_model(document: Union[str, dict]) -> ParametricCtmc:
    """Parse and fully validate a model document (JSON text or dict)."""
    if isinstance(document, str):
        try:
            raw = json.loads(document, parse_float=Fraction)
        except json.JSONDecodeError as exc:
            raise ModelError(f"invalid JSON: {exc}") from None
    else:
        raw = document
    if not isinstance(raw, dict):
        raise ModelError("model document must be a JSON object")

    name = raw.get("name", "model")

    parameters = []
    for p in raw.get("parameters", []):
        parameters.append(Parameter(str(p["name"]), _parse_distribution(
            {k: (float(v) if isinstance(v, Fraction) else v)
             for k, v in p["distribution"].items()})))

    variables = []
    for v in raw.get("variables", []):
        init, lo, hi = v["init"], v["min"], v["max"]
        for b in (init, lo, hi):
            if isinstance(b, Fraction) or not isinstance(b, int) or isinstance(b, bool):
                raise ModelError(f"variable {v['name']}: bounds and init must be integers")
        if not lo <= init <= hi:
            raise ModelError(f"variable {v['name']}: init {init} outside [{lo}, {hi}]")
        variables.append(StateVariable(str(v["name"]), init, lo, hi))

    param_names = [p.name for p in parameters]
    var_names = [v.name for v in variables]
    all_names = param_names + var_names
    if len(set(all_names)) != len(all_names):
        raise ModelError("duplicate parameter/variable names")
    param_set, var_set = set(param_names), set(var_names)

    def check_idents(node, allowed: set, what: str):
        unknown = ex.free_identifiers(node) - allowed
        if unknown:
            raise ModelError(f"undeclared identifier in {what}: {sorted(unknown)[0]}")

    commands = []
    for k, c in enumerate(raw.get("commands", [])):
        guard = ex.parse_guard(c["guard"])
        check_idents(guard, var_set, f"command {k} guard")
        rate = ex.parse_expression(c["rate"])
        check_idents(rate, var_set | param_set, f"command {k} rate")
        updates = []
        for var, update_text in c.get("updates", {}).items():
            if var not in var_set:
                raise ModelError(f"command {k} updates undeclared variable {var}")
            update = ex.parse_expression(update_text)
            check_idents(update, var_set, f"command {k} update of {var}")
            updates.append((var, update))
        commands.append(Command(guard, rate, tuple(updates)))

    labels = {}
    for label, guard_text in raw.get("labels", {}).items():
        guard = ex.parse_guard(guard_text)
        check_idents(guard, var_set, f"label {label}")
        labels[str(label)] = guard

    rewards = {}
    var_box = {v.name: (v.minimum, v.maximum) for v in variables}
    for rname, payload in raw.get("rewards", {}).items():
        reward = ex.parse_expression(payload["states"])
        check_idents(reward, var_set, f"reward {rname}")
        # truncation bounds treat the sink's reward as 0 (worst case), which
        # is only sound when no state can carry a negative reward
        lo, _ = ex.bounds(reward, var_box)
        if lo < 0:
            raise ModelError(
                f"reward {rname} may be negative over the variable bounds; "
                "rewards must be nonnegative")
        rewards[str(rname)] = reward

    init_distribution = None
    if raw.get("init_distribution") is not None:
        entries = []
        total = Fraction(0)
        for entry in raw["init_distribution"]:
            assignment = entry["state"]
            point = []
            for v in variables:
                if v.name not in assignment:
                    raise ModelError(f"init_distribution entry misses variable {v.name}")
                value = assignment[v.name]
                if not isinstance(value, int) or not v.minimum <= value <= v.maximum:
                    raise ModelError(f"init_distribution value for {v.name} out of bounds")
                point.append(value)
            prob = Fraction(entry["prob"])
            if prob <= 0:
                raise ModelError("init_distribution probabilities must be positive")
            total += prob
            entries.append((tuple(point), prob))
        if total != 1:
            raise ModelError(f"init_distribution probabilities sum to {total}, not 1")
        init_distribution = tuple(entries)

    return ParametricCtmc(
        name=name,
        parameters=tuple(parameters),
        variables=tuple(variables),
        commands=tuple(commands),
        labels=labels,
        rewards=rewards,
        init_distribution=init_distribution,
    )


def load_model(path) -> ParametricCtmc:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_model(handle.read())


# ---------------------------------------------------------------------------
# Parameter-free reachable structure (shared by all valuations)
# ---------------------------------------------------------------------------

@dataclass
class _Structure:
    states: list[tuple[int, ...]]
    index: dict
    init_support: list[int]
    # per source state, list of (target index, rate expression in parameters only),
    # one entry per enabled command occurrence (parallel edges not yet merged)
    edges: list[list[tuple[int, ex.Expr]]]


_structure_cache: "weakref.WeakKeyDictionary[ParametricCtmc, _Structure]" = (
    weakref.WeakKeyDictionary()
)


def _state_env(m: ParametricCtmc, state: tuple[int, ...]) -> dict:
    return dict(zip(m.variable_names, state))


def _successor(m: ParametricCtmc, state: tuple[int, ...], command: Command,
               env: dict) -> tuple[int, ...]:
    new = list(state)
    positions = {v: i for i, v in enumerate(m.variable_names)}
    for var, update in command.updates:
        value = ex.evaluate(update, env)
        if value.denominator != 1:
            raise ModelError(f"update of {var} is not integer at state {state}")
        value = int(value)
        i = positions[var]
        vmin, vmax = m.variables[i].minimum, m.variables[i].maximum
        if not vmin <= value <= vmax:
            raise ModelError(
                f"update of {var} to {value} leaves bounds [{vmin}, {vmax}] at state {state}")
        new[i] = value
    return tuple(new)


def _structure(m: ParametricCtmc, state_cap: int = DEFAULT_STATE_CAP) -> _Structure:
    cached = _structure_cache.get(m)
    if cached is not None:
        if len(cached.states) > state_cap:
            raise StateCapExceeded(
                f"reachable state space has {len(cached.states)} states, cap is {state_cap}")
        return cached

    states: list[tuple[int, ...]] = []
    index: dict = {}
    init_support = []
    for point, _prob in m.initial_states():
        if point not in index:
            index[point] = len(states)
            states.append(point)
        init_support.append(index[point])

    edges: list[list[tuple[int, ex.Expr]]] = []
    frontier = list(range(len(states)))
    cursor = 0
    while cursor < len(frontier):
        src = frontier[cursor]
        cursor += 1
        env = _state_env(m, states[src])
        out = []
        for command in m.commands:
            if not ex.evaluate_guard(command.guard, env):
                continue
            target = _successor(m, states[src], command, env)
            if target not in index:
                if len(states) >= state_cap:
                    raise StateCapExceeded(f"state cap of {state_cap} exceeded")
                index[target] = len(states)
                states.append(target)
                frontier.append(index[target])
            rate = ex.substitute(command.rate, env)
            out.append((index[target], rate))
        edges.append(out)

    structure = _Structure(states, index, init_support, edges)
    _structure_cache[m] = structure
    return structure


# ---------------------------------------------------------------------------
# Graph preservation
# ---------------------------------------------------------------------------

def _param_env(m: ParametricCtmc, u: Valuation) -> dict:
    if u.dimension != len(m.parameters):
        raise ModelError(
            f"valuation has dimension {u.dimension}, model has {len(m.parameters)} parameters")
    return dict(zip(m.parameter_names, u.values))


def graph_preservation_violation(m: ParametricCtmc, u: Valuation,
                                 state_cap: int = DEFAULT_STATE_CAP) -> Optional[str]:
    """None if u is graph-preserving, else a description of the first violation."""
    structure = _structure(m, state_cap)
    env = _param_env(m, u)
    for src, out in enumerate(structure.edges):
        for tgt, rate in out:
            value = ex.evaluate(rate, env)
            if value <= 0:
                return (f"rate {ex.to_source(rate)} evaluates to {value} on transition "
                        f"{structure.states[src]} -> {structure.states[tgt]}")
    return None


def check_graph_preserving(m: ParametricCtmc, u: Valuation,
                           state_cap: int = DEFAULT_STATE_CAP) -> bool:
    """True iff no reachable transition rate becomes <= 0 at u (exact check)."""
    return graph_preservation_violation(m, u, state_cap) is None


# ---------------------------------------------------------------------------
# Explicit-state CTMCs
# ---------------------------------------------------------------------------

class ConcreteCtmc:
    """Explicit CTMC: indexed states, sparse positive rate matrix, label sets.

    ``exit_rates[s]`` is the full row sum including self-loops; self-loops are
    semantically inert for CTMCs and are kept only so transition counts match
    the source model.
    """

    def __init__(self, states, initial, rates, labels=None, rewards=None):
        self.states = states
        self.initial = np.asarray(initial, dtype=float)
        self.rates = rates.tocsr()
        self.exit_rates = np.asarray(self.rates.sum(axis=1)).ravel()
        self.labels = {k: np.asarray(v, dtype=bool) for k, v in (labels or {}).items()}
        self.rewards = {k: np.asarray(v, dtype=float) for k, v in (rewards or {}).items()}

    @classmethod
    def from_dense(cls, rates, initial, labels=None, rewards=None) -> "ConcreteCtmc":
        rates = np.asarray(rates, dtype=float)
        n = rates.shape[0]
        states = [(i,) for i in range(n)]
        return cls(states, initial, sparse.csr_matrix(rates), labels, rewards)

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_transitions(self) -> int:
        return int(self.rates.nnz)

    def edges(self) -> Iterator[tuple[int, int, float]]:
        coo = self.rates.tocoo()
        yield from zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())

    def label_mask(self, label: str) -> np.ndarray:
        try:
            return self.labels[label]
        except KeyError:
            raise ModelError(f"unknown label: {label}") from None

    def reward_vector(self, name: str) -> np.ndarray:
        try:
            return self.rewards[name]
        except KeyError:
            raise ModelError(f"unknown reward: {name}") from None


class PartialCtmc(ConcreteCtmc):
    """Truncated CTMC with one absorbing sink collecting all redirected mass.

    The sink is the last state index; labels and rewards never include it, so
    analyses choose explicitly how to treat truncated mass.
    """

    def __init__(self, states, initial, rates, labels, rewards, delta,
                 retained_states, redirected_rate, origin=None):
        super().__init__(states, initial, rates, labels, rewards)
        self.delta = delta
        self.retained_states = retained_states
        self.redirected_rate = redirected_rate
        self.origin = origin

    @property
    def sink(self) -> int:
        return self.num_states - 1

    @property
    def sink_reachable(self) -> bool:
        return self.redirected_rate > 0.0


def _assemble(m: ParametricCtmc, states, merged_edges, n, extra_sink=False):
    """Common matrix/label/reward assembly from merged (src, tgt)->rate maps."""
    size = n + 1 if extra_sink else n
    rows, cols, vals = [], [], []
    for src, targets in enumerate(merged_edges):
        for tgt, rate in targets.items():
            rows.append(src)
            cols.append(tgt)
            vals.append(float(rate))
    rates = sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))

    initial = np.zeros(size)
    state_index = {s: i for i, s in enumerate(states[:n])}
    for point, prob in m.initial_states():
        initial[state_index[point]] += float(prob)

    labels, rewards = {}, {}
    for label, guard in m.labels.items():
        mask = np.zeros(size, dtype=bool)
        for i in range(n):
            mask[i] = ex.evaluate_guard(guard, _state_env(m, states[i]))
        labels[label] = mask
    for rname, reward in m.rewards.items():
        vec = np.zeros(size)
        for i in range(n):
            vec[i] = float(ex.evaluate(reward, _state_env(m, states[i])))
        rewards[rname] = vec
    return rates, initial, labels, rewards


def build_full(m: ParametricCtmc, u: Valuation,
               state_cap: int = DEFAULT_STATE_CAP) -> ConcreteCtmc:
    """Instantiate at u and build the full reachable CTMC (BFS order).

    Raises GraphPreservationError the moment any enabled command's rate
    evaluates to <= 0.
    """
    structure = _structure(m, state_cap)
    env = _param_env(m, u)
    n = len(structure.states)
    merged: list[dict] = []
    for src, out in enumerate(structure.edges):
        row: dict = {}
        for tgt, rate_expr in out:
            value = ex.evaluate(rate_expr, env)
            if value <= 0:
                raise GraphPreservationError(
                    f"rate {ex.to_source(rate_expr)} evaluates to {value} on transition "
                    f"{structure.states[src]} -> {structure.states[tgt]}")
            row[tgt] = row.get(tgt, Fraction(0)) + value
        merged.append(row)
    rates, initial, labels, rewards = _assemble(m, structure.states, merged, n)
    return ConcreteCtmc(structure.states, initial, rates, labels, rewards)


def build_partial(m: ParametricCtmc, u: Valuation, delta: float,
                  reuse: Optional[Sequence[tuple[int, ...]]] = None,
                  state_cap: int = DEFAULT_STATE_CAP,
                  origin: Optional[int] = None) -> PartialCtmc:
    """Build a truncated CTMC keeping states with estimated reach probability > delta.

    States are expanded in descending order of the product of embedded-DTMC
    branch probabilities along their discovery path (an upper estimate of the
    probability to reach them); a state with estimate <= delta is not expanded
    and all transitions into it are redirected to the sink.  The retained set
    always contains the initial support.  If ``reuse`` is given, exactly that
    state set is retained (extended by the initial support if missing) and only
    the rates are re-instantiated at u.
    """
    if not 0 < delta <= 1:
        raise ModelError("delta must lie in (0, 1]")
    env = _param_env(m, u)

    def outgoing(state):
        """Merged (target state, rate as Fraction) pairs; validates positivity."""
        senv = _state_env(m, state)
        row: dict = {}
        for command in m.commands:
            if not ex.evaluate_guard(command.guard, senv):
                continue
            value = ex.evaluate(command.rate, {**env, **senv})
            if value <= 0:
                raise GraphPreservationError(
                    f"rate {ex.to_source(command.rate)} evaluates to {value} at state {state}")
            target = _successor(m, state, command, senv)
            row[target] = row.get(target, Fraction(0)) + value
        return row

    init_points = [point for point, _ in m.initial_states()]

    if reuse is not None:
        retained = list(dict.fromkeys(list(reuse) + init_points))
    else:
        # Best-first exploration by estimated reachability (max product of
        # branch probabilities; lazy-deletion heap keyed on the running best).
        best = {p: 1.0 for p in init_points}
        heap = [(-1.0, i, p) for i, p in enumerate(init_points)]
        heapq.heapify(heap)
        seq = len(init_points)
        expanded = set()
        order = []
        while heap:
            neg_est, _, state = heapq.heappop(heap)
            est = -neg_est
            if state in expanded or est < best[state]:
                continue
            if est <= delta:
                continue
            expanded.add(state)
            order.append(state)
            if len(order) > state_cap:
                raise StateCapExceeded(f"state cap of {state_cap} exceeded")
            row = outgoing(state)
            exit_rate = float(sum(row.values()))
            if exit_rate <= 0:
                continue
            for target, rate in row.items():
                if target in expanded:
                    continue
                estimate = est * float(rate) / exit_rate
                if estimate > best.get(target, 0.0):
                    best[target] = estimate
                    heapq.heappush(heap, (-estimate, seq, target))
                    seq += 1
        retained = list(dict.fromkeys(init_points + order))

    index = {s: i for i, s in enumerate(retained)}
    n = len(retained)
    sink = n
    merged: list[dict] = []
    redirected = 0.0
    for state in retained:
        row_out: dict = {}
        for target, rate in outgoing(state).items():
            tgt = index.get(target, sink)
            if tgt == sink:
                redirected += float(rate)
            row_out[tgt] = row_out.get(tgt, Fraction(0)) + rate
        merged.append(row_out)
    merged.append({})  # absorbing sink

    states = retained + [None]
    rates, initial, labels, rewards = _assemble(m, retained, merged, n, extra_sink=True)
    return PartialCtmc(states, initial, rates, labels, rewards, delta,
                       tuple(retained), redirected, origin)


# ---------------------------------------------------------------------------
# Valuation clustering (for partial-model reuse)
# ---------------------------------------------------------------------------

def standardization_scales(parameters: Sequence[Parameter]) -> np.ndarray:
    """Per-parameter scale: std for normals, range/sqrt(12) for uniforms."""
    scales = []
    for p in parameters:
        d = p.distribution
        if isinstance(d, Normal):
            scales.append(d.std)
        else:
            scales.append((d.high - d.low) / math.sqrt(12.0))
    return np.asarray(scales, dtype=float)


def cluster_valuations(valuations: Sequence[Valuation], radius: float,
                       parameters: Sequence[Parameter]) -> list[ValuationCluster]:
    """Greedy leader clustering in standardized Euclidean coordinates.

    Scans valuations in order and assigns each to the first cluster whose
    representative lies within ``radius``; otherwise the valuation opens a new
    cluster.  Deterministic given the input order.
    """
    if radius <= 0:
        raise ModelError("radius must be positive")
    scales = standardization_scales(parameters)
    clusters: list[ValuationCluster] = []
    reps: list[np.ndarray] = []
    for i, u in enumerate(valuations):
        point = np.asarray(u.to_floats()) / scales
        placed = False
        for cluster, rep in zip(clusters, reps):
            if np.linalg.norm(point - rep) <= radius:
                cluster.members.append(u)
                cluster.member_indices.append(i)
                placed = True
                break
        if not placed:
            clusters.append(ValuationCluster(u, [u], [i]))
            reps.append(point)
    return clusters
