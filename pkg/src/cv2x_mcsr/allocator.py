"""Capacity dimensioning and grouping selection for multi-CSR allocation.

``allocate`` picks (n_CSR, gamma) from the vehicle count with a fixed
threshold table, then ``best_group`` chooses the stream grouping that
minimises the priority-weighted sum of per-stream average delays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

from .mac import SpsConfig
from .model import (CsrPlan, GAMMA_VALUES, GenerationParams, GroupingOption, MAX_CSR,
                    PacketClass, PRIORITY_ORDER, ScenarioConfig, StreamSet, Weights)


class CapacityExceeded(ValueError):
    """No supported (n_CSR, gamma) pair can carry the requested vehicle count."""


def n_max(n_csr: int, gamma: int, alloc_fraction: float = 0.8, S: int = 25) -> int:
    """Largest vehicle count for which every vehicle gets ``n_csr`` allocatable CSRs."""
    if not 1 <= n_csr <= MAX_CSR:
        raise ValueError(f"n_CSR must lie in [1, {MAX_CSR}], got {n_csr}")
    if gamma not in GAMMA_VALUES:
        raise ValueError(f"gamma must be one of {GAMMA_VALUES}, got {gamma}")
    # exact rational ceiling; 0.8 * 25 * 20 is not exactly 400.0 in binary
    num = round(alloc_fraction * S * gamma * 1e9)
    return -(-num // (n_csr * 10**9))


def _opt(index, *groups):
    return GroupingOption(index, tuple(StreamSet.parse(g) for g in groups))


# Indexed partitions of {H, D, C, M}; group order within a row is as listed.
GROUPING_TABLE = (
    _opt(1, "HDCM"),
    _opt(2, "C", "HDM"),
    _opt(3, "H", "DCM"),
    _opt(4, "D", "HCM"),
    _opt(5, "M", "HDC"),
    _opt(6, "HC", "DM"),
    _opt(7, "HM", "DC"),
    _opt(8, "HD", "CM"),
    _opt(9, "C", "H", "DM"),
    _opt(10, "H", "D", "CM"),
    _opt(11, "C", "M", "HD"),
    _opt(12, "D", "C", "HM"),
    _opt(13, "D", "M", "HC"),
    _opt(14, "H", "M", "DC"),
    _opt(15, "H", "D", "C", "M"),
)

_LEGAL = {1: range(1, 2), 2: range(2, 9), 3: range(9, 15), 4: range(15, 16)}


def enumerate_groupings(n_csr: int) -> list:
    if n_csr not in _LEGAL:
        raise ValueError(f"n_CSR must lie in [1, {MAX_CSR}], got {n_csr}")
    return [GROUPING_TABLE[k - 1] for k in _LEGAL[n_csr]]


def grouping(index: int) -> GroupingOption:
    if not 1 <= index <= len(GROUPING_TABLE):
        raise ValueError(f"grouping index must lie in [1, 15], got {index}")
    return GROUPING_TABLE[index - 1]


def legal_indices(n_csr: int) -> range:
    return _LEGAL[n_csr]


def sum_average_delay(delays: Mapping[PacketClass, float], weights: Weights) -> float:
    missing = [c.letter for c in PRIORITY_ORDER if c not in delays]
    if missing:
        raise ValueError(f"delays missing for streams {','.join(missing)}")
    return sum(weights[c] * delays[c] for c in PRIORITY_ORDER)


# (n_CSR, gamma) per upper bound on N, checked in order.
THRESHOLDS = (
    (100, 4, 20),
    (134, 3, 20),
    (200, 2, 20),
    (400, 1, 20),
    (500, 2, 50),
    (1000, 1, 50),
    (2000, 1, 100),
)


def select_resources(N: int) -> tuple[int, int]:
    """(n_CSR, gamma) for ``N`` vehicles."""
    if N <= 0:
        raise CapacityExceeded(f"N out of range: {N} (need 1 <= N <= {THRESHOLDS[-1][0]})")
    for bound, n_csr, gamma in THRESHOLDS:
        if N <= bound:
            return n_csr, gamma
    raise CapacityExceeded(f"N out of range: {N} (need 1 <= N <= {THRESHOLDS[-1][0]})")


@dataclass(frozen=True)
class EvalContext:
    N: int
    n_csr: int
    gamma: int
    gen: GenerationParams


# (streams of one CSR, context) -> {stream: average delay in s}
Evaluator = Callable[[StreamSet, EvalContext], Mapping[PacketClass, float]]


def _score(x: float) -> float:
    # no traffic on a stream costs nothing; undelivered traffic is worst
    if math.isnan(x):
        return 0.0
    return x


def grouping_delays(option: GroupingOption, ctx: EvalContext, evaluator: Evaluator) -> dict:
    """Per-stream delay of ``option``, each read from the CSR that carries it."""
    out = {}
    for g in option.groups:
        d = evaluator(g, ctx)
        for c in g:
            out[c] = d[c]
    return out


def best_group(n_csr: int, gamma: int, gen: GenerationParams, weights: Weights,
               evaluator: Evaluator, N: int = 1, scores: Optional[dict] = None) -> int:
    """Index of the grouping with the smallest weighted delay sum.

    Ties go to the smallest index.  When ``scores`` is given it is filled with
    ``{index: weighted sum}`` for every candidate.
    """
    if n_csr == 1:
        return 1
    if n_csr == MAX_CSR:
        return 15
    ctx = EvalContext(N, n_csr, gamma, gen)
    best, best_val = None, None
    for opt in enumerate_groupings(n_csr):
        d = grouping_delays(opt, ctx, evaluator)
        val = sum_average_delay({c: _score(x) for c, x in d.items()}, weights)
        if scores is not None:
            scores[opt.index] = val
        if best is None or val < best_val:
            best, best_val = opt.index, val
    return best


def allocate(N: int, gen: GenerationParams, weights: Weights,
             evaluator: Evaluator) -> CsrPlan:
    n_csr, gamma = select_resources(N)
    return CsrPlan(n_csr, gamma, best_group(n_csr, gamma, gen, weights, evaluator, N=N))


class SimulationEvaluator:
    """Per-CSR delays from the simulator.

    The group's streams are simulated on one of the CSRs of a full ``N``
    vehicle, ``n_CSR`` reservation scenario; the other streams are switched
    off, so the remaining reservations only contribute contention.  Results
    are cached per (group, context).
    """

    def __init__(self, seed: int = 12345, min_samples: int = 10_000,
                 min_duration: float = 20.0, max_duration: float = 400.0,
                 sps: Optional[SpsConfig] = None, queue_capacity: int = 10):
        self.seed = seed
        self.min_samples = min_samples
        self.min_duration = min_duration
        self.max_duration = max_duration
        self.sps = sps or SpsConfig()
        self.queue_capacity = queue_capacity
        self._cache: dict = {}

    def duration(self, group: StreamSet, ctx: EvalContext) -> float:
        rates = [ctx.gen.effective_rate(c) for c in group if ctx.gen.rate(c) > 0]
        if not rates:
            return self.min_duration
        need = self.min_samples / (ctx.N * min(rates))
        warm = 10 * ctx.gamma / 1000.0
        return float(min(self.max_duration, max(self.min_duration, math.ceil(need + warm))))

    def __call__(self, group: StreamSet, ctx: EvalContext) -> dict:
        key = (group, ctx)
        if key in self._cache:
            return self._cache[key]
        from .simulator import run_scenario

        opt = next(o for o in enumerate_groupings(ctx.n_csr) if group in o.groups)
        cfg = ScenarioConfig(N=ctx.N, gen=ctx.gen.masked(group), sim_duration=self.duration(group, ctx),
                             seed=self.seed, queue_capacity=self.queue_capacity, sps=self.sps)
        res = run_scenario(cfg, CsrPlan(ctx.n_csr, ctx.gamma), opt)
        out = {c: res.d_avg[c] for c in group}
        self._cache[key] = out
        return out
