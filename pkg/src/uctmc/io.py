"""JSON and CSV serialization for samples, measures, solutions, regions, bands.

All files are UTF-8.  Floats are emitted with Python's shortest round-trip
repr, so rewriting the same data is byte-identical; none of the data files
carry timestamps (timings live only in the run summary).
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from .checker import (
    IntervalReach,
    IntervalSolution,
    InstantReward,
    MeasureSet,
    SolutionVector,
    TimeBoundedReach,
)
from .model import Valuation
from .sampling import SampleSet
from .scenario import ScenarioOutcome


class FormatError(ValueError):
    pass


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(obj, handle, indent=2)
        handle.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


# --------------------------------------------------------------------------
# samples.json
# --------------------------------------------------------------------------

def write_samples(samples: SampleSet, path) -> None:
    dump_json({
        "seed": samples.seed,
        "valuations": [list(u.to_floats()) for u in samples.valuations],
        "rejected": samples.rejected_count,
    }, path)


def read_samples(path) -> SampleSet:
    raw = load_json(path)
    try:
        valuations = tuple(Valuation.from_floats(row) for row in raw["valuations"])
        return SampleSet(int(raw["seed"]), valuations, int(raw["rejected"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad samples file {path}: {exc}") from None


# --------------------------------------------------------------------------
# measures.json
# --------------------------------------------------------------------------

def read_measures(path) -> MeasureSet:
    raw = load_json(path)
    measures = []
    for entry in raw.get("measures", []):
        kind = entry.get("type")
        try:
            if kind == "reach":
                measures.append(TimeBoundedReach(entry["id"], entry["target"],
                                                 float(entry["tau"])))
            elif kind == "reach_interval":
                measures.append(IntervalReach(entry["id"], entry["target"],
                                              float(entry["t1"]), float(entry["t2"])))
            elif kind == "instant_reward":
                measures.append(InstantReward(entry["id"], entry["reward"],
                                              float(entry["t"])))
            else:
                raise FormatError(f"unknown measure type: {kind!r}")
        except KeyError as exc:
            raise FormatError(f"measure entry misses field {exc}") from None
    if not measures:
        raise FormatError(f"no measures in {path}")
    return MeasureSet(tuple(measures))


def write_measures(measures: MeasureSet, path) -> None:
    entries = []
    for m in measures:
        if isinstance(m, TimeBoundedReach):
            entries.append({"id": m.id, "type": "reach", "target": m.target,
                            "tau": m.horizon})
        elif isinstance(m, IntervalReach):
            entries.append({"id": m.id, "type": "reach_interval", "target": m.target,
                            "t1": m.t_lo, "t2": m.t_hi})
        else:
            entries.append({"id": m.id, "type": "instant_reward", "reward": m.reward,
                            "t": m.time})
    dump_json({"measures": entries}, path)


# --------------------------------------------------------------------------
# solutions.json
# --------------------------------------------------------------------------

def write_solutions(measure_ids: Sequence[str], solutions, path) -> None:
    entries = []
    mode = "exact"
    for s in solutions:
        if isinstance(s, SolutionVector):
            entries.append({"i": s.valuation_index,
                            "values": [float(v) for v in s.values]})
        elif isinstance(s, IntervalSolution):
            mode = "approx"
            entries.append({"i": s.valuation_index,
                            "lower": [float(v) for v in s.lower],
                            "upper": [float(v) for v in s.upper],
                            "delta": s.delta})
        else:
            raise FormatError(f"not a solution object: {s!r}")
    dump_json({"measure_ids": list(measure_ids), "mode": mode, "solutions": entries}, path)


def read_solutions(path):
    """Returns (measure_ids, mode, solutions list)."""
    raw = load_json(path)
    try:
        mode = raw["mode"]
        out = []
        for entry in raw["solutions"]:
            if mode == "exact":
                out.append(SolutionVector(int(entry["i"]),
                                          np.asarray(entry["values"], dtype=float)))
            else:
                out.append(IntervalSolution(int(entry["i"]),
                                            np.asarray(entry["lower"], dtype=float),
                                            np.asarray(entry["upper"], dtype=float),
                                            float(entry["delta"])))
        return list(raw["measure_ids"]), mode, out
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad solutions file {path}: {exc}") from None


# --------------------------------------------------------------------------
# regions.json
# --------------------------------------------------------------------------

def outcome_to_json(outcome: ScenarioOutcome) -> dict:
    return {
        "rho": float(outcome.rho),
        "beta": {repr(float(beta)): float(eta) for beta, eta in outcome.eta.items()},
        "lower": [float(v) for v in outcome.region.lower],
        "upper": [float(v) for v in outcome.region.upper],
        "relaxed": list(outcome.relaxed),
        "complexity_bound": outcome.complexity_bound,
        "mode": outcome.mode,
        "n": outcome.n,
    }


def write_regions(outcomes: Sequence[ScenarioOutcome], path) -> None:
    dump_json([outcome_to_json(o) for o in outcomes], path)


def read_regions(path) -> list[dict]:
    raw = load_json(path)
    if not isinstance(raw, list):
        raise FormatError(f"regions file {path} must hold a list")
    return raw


# --------------------------------------------------------------------------
# band.csv
# --------------------------------------------------------------------------

def write_band_csv(bands: Sequence[tuple[float, "np.ndarray", "np.ndarray", "np.ndarray"]],
                   path) -> None:
    """Long-format rows (rho, t, lower, upper), one block per region."""
    lines = ["rho,t,lower,upper"]
    for rho, horizons, lower, upper in bands:
        for t, lo, hi in zip(horizons, lower, upper):
            lines.append(f"{float(rho)!r},{float(t)!r},{float(lo)!r},{float(hi)!r}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
