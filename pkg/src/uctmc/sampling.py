"""Reproducible i.i.d. parameter sampling with graph-preservation rejection.

RNG contract (pinned for bit-reproducibility across platforms and runs):

* Bit source: numpy's Philox 4x64 counter-based generator.  Parameter ``j`` of
  a model draws from an independent stream keyed by ``(seed, j + 1)``; raw
  64-bit outputs are mapped to doubles in (0, 1) via ``((r >> 11) + 0.5) * 2^-53``.
* Normal marginals use the inverse CDF evaluated with Acklam's rational
  polynomial approximation (coefficients below, relative error < 1.15e-9), not
  a rejection method, so the draw count per valuation is fixed and the stream
  position never depends on previously drawn values.
* A candidate valuation is one draw from every stream in lockstep.  Candidates
  violating graph preservation are rejected and counted; drawing proceeds until
  n valuations are accepted or a budget of 10*n candidates is exhausted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Philox

from .model import (
    Normal,
    ParametricCtmc,
    Uniform,
    Valuation,
    check_graph_preserving,
)

#: Marginals, one per model parameter, in declaration order.
DistributionSpec = tuple

_MASK64 = (1 << 64) - 1


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SampleSet:
    seed: int
    valuations: tuple[Valuation, ...]
    rejected_count: int

    def __len__(self) -> int:
        return len(self.valuations)

    def matrix(self) -> np.ndarray:
        return np.array([u.to_floats() for u in self.valuations], dtype=float)


# Acklam's inverse normal CDF approximation (lower/central/upper regions).
_ACKLAM_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACKLAM_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
             6.680131188771972e+01, -1.328068155288572e+01)
_ACKLAM_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACKLAM_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
             3.754408661907416e+00)
_ACKLAM_SPLIT = 0.02425


def standard_normal_ppf(u):
    """Inverse standard-normal CDF via Acklam's approximation (vectorized)."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)

    lower = u < _ACKLAM_SPLIT
    upper = u > 1.0 - _ACKLAM_SPLIT
    central = ~(lower | upper)

    if np.any(central):
        q = u[central] - 0.5
        r = q * q
        a, b = _ACKLAM_A, _ACKLAM_B
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
        out[central] = q * num / den

    def tail(q):
        c, d = _ACKLAM_C, _ACKLAM_D
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
        return num / den

    if np.any(lower):
        q = np.sqrt(-2.0 * np.log(u[lower]))
        out[lower] = tail(q)
    if np.any(upper):
        q = np.sqrt(-2.0 * np.log(1.0 - u[upper]))
        out[upper] = -tail(q)
    return out


class _ParameterStream:
    """One Philox stream per parameter; draws are uniform doubles in (0, 1)."""

    def __init__(self, seed: int, index: int):
        key = np.array([seed & _MASK64, (index + 1) & _MASK64], dtype=np.uint64)
        self._bitgen = Philox(key=key)

    def uniforms(self, count: int) -> np.ndarray:
        raw = self._bitgen.random_raw(count)
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def distribution_spec(m: ParametricCtmc) -> DistributionSpec:
    return tuple(p.distribution for p in m.parameters)


def draw_candidates(spec: DistributionSpec, count: int,
                    streams: list[_ParameterStream]) -> np.ndarray:
    """Draw ``count`` candidate valuations (rows) from the marginals."""
    columns = []
    for dist, stream in zip(spec, streams):
        u = stream.uniforms(count)
        if isinstance(dist, Normal):
            columns.append(dist.mean + dist.std * standard_normal_ppf(u))
        elif isinstance(dist, Uniform):
            columns.append(dist.low + (dist.high - dist.low) * u)
        else:
            raise SamplingError(f"unsupported distribution: {dist!r}")
    return np.column_stack(columns)


def sample_valuations(m: ParametricCtmc, n: int, seed: int) -> SampleSet:
    """Draw n i.i.d. graph-preserving valuations; deterministic given seed.

    Rejection implements conditioning of the parameter distribution on the
    graph-preserving region; the number of rejected candidates is reported.
    """
    if n < 1:
        raise SamplingError("n must be >= 1")
    spec = distribution_spec(m)
    if not spec:
        raise SamplingError("model has no parameters to sample")
    streams = [_ParameterStream(seed, j) for j in range(len(spec))]

    accepted: list[Valuation] = []
    rejected = 0
    budget = 10 * n
    drawn = 0
    while len(accepted) < n and drawn < budget:
        block = min(n, budget - drawn)
        candidates = draw_candidates(spec, block, streams)
        drawn += block
        for row in candidates:
            valuation = Valuation.from_floats(row)
            if check_graph_preserving(m, valuation):
                accepted.append(valuation)
                if len(accepted) == n:
                    break
            else:
                rejected += 1
    if len(accepted) < n:
        raise SamplingError(
            "distribution incompatible with graph-preserving region "
            f"({rejected} of {drawn} candidates rejected)")
    return SampleSet(seed=seed, valuations=tuple(accepted), rejected_count=rejected)
