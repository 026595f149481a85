"""Per-vehicle packet arrivals.

HPD, DENM and MHD events are Poisson; CAM is periodic with a random per-vehicle
phase.  Every HPD/DENM event is expanded into its scheduled repetitions, each of
which is an independent MAC packet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import GenerationParams, PacketClass, PRIORITY_ORDER

# (rng, rate, size) -> inter-arrival gaps in seconds
GapSampler = Callable[[np.random.Generator, float, int], np.ndarray]


def exponential_gaps(rng: np.random.Generator, rate: float, size: int) -> np.ndarray:
    return rng.exponential(1.0 / rate, size=size)


@dataclass(frozen=True)
class PacketArrival:
    vehicle_id: int
    stream: PacketClass
    birth_time: float
    repetition_index: int = 0
    parent_event_id: int = 0
    packet_id: int = -1


def next_poisson_arrival(rate: float, now: float, rng: np.random.Generator) -> float:
    if not rate > 0:
        raise ValueError(f"Poisson rate must be positive, got {rate}")
    return now + rng.exponential(1.0 / rate)


def cam_schedule(T_C: float, offset: float, horizon: float) -> list[float]:
    if T_C is None or not T_C > 0:
        raise ValueError(f"CAM interval must be positive, got {T_C}")
    if not 0 <= offset < T_C:
        raise ValueError("offset must lie in [0, T_C)")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    n = max(0, math.ceil((horizon - offset) / T_C))
    times = [offset + k * T_C for k in range(n)]
    return [t for t in times if t < horizon]


def repetition_spacing(gen: GenerationParams, gamma: Optional[int]) -> float:
    if gen.rep_interval is not None:
        return gen.rep_interval
    if gamma is None:
        raise ValueError("rep_interval unset and no selection window given")
    return gamma / 1000.0


def expand_repetitions(event: PacketArrival, gen: GenerationParams,
                       gamma: Optional[int] = None) -> list[PacketArrival]:
    if event.repetition_index != 0:
        raise ValueError("only original events can be expanded")
    reps = gen.repetitions(event.stream)
    if reps == 1:
        return [event]
    dt = repetition_spacing(gen, gamma)
    return [
        PacketArrival(event.vehicle_id, event.stream, event.birth_time + k * dt, k,
                      event.parent_event_id)
        for k in range(reps)
    ]


@dataclass
class StreamArrivals:
    """Arrivals of one stream at one vehicle, sorted by birth time.

    ``eligible`` is the first subframe (ms index) in which the packet can be
    served; position in the arrays is the packet id.
    """

    birth: np.ndarray
    eligible: np.ndarray
    rep: np.ndarray
    parent: np.ndarray

    def __len__(self):
        return len(self.birth)

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
                   np.empty(0, dtype=np.int64))


def _poisson_times(rng, rate, horizon, sampler: GapSampler) -> np.ndarray:
    mean = rate * horizon
    size = int(mean + 6.0 * math.sqrt(mean) + 16)
    t = np.cumsum(sampler(rng, rate, size))
    while t[-1] < horizon:
        more = np.cumsum(sampler(rng, rate, size)) + t[-1]
        t = np.concatenate([t, more])
    return t[t < horizon]


def generate_vehicle_arrivals(gen: GenerationParams, horizon: float, n_subframes: int,
                              gamma: int, rng: np.random.Generator,
                              sampler: GapSampler = exponential_gaps) -> dict:
    """All arrivals of one vehicle over ``[0, horizon)``.

    Packets whose first eligible subframe falls at or beyond ``n_subframes``
    are not generated.  Returns ``{PacketClass: StreamArrivals}``.
    """
    out = {}
    dt = repetition_spacing(gen, gamma)
    for c in PRIORITY_ORDER:
        rate = gen.rate(c)
        if rate <= 0:
            out[c] = StreamArrivals.empty()
            continue
        if c is PacketClass.CAM:
            offset = rng.uniform(0.0, gen.T_C)
            n = max(0, math.ceil((horizon - offset) / gen.T_C))
            events = offset + gen.T_C * np.arange(n)
            events = events[events < horizon]
        else:
            events = _poisson_times(rng, rate, horizon, sampler)
        reps = gen.repetitions(c)
        parent = np.repeat(np.arange(len(events), dtype=np.int64), reps)
        rep = np.tile(np.arange(reps, dtype=np.int64), len(events))
        birth = np.repeat(events, reps) + rep * dt
        order = np.argsort(birth, kind="stable")
        birth, rep, parent = birth[order], rep[order], parent[order]
        eligible = np.ceil(birth * 1000.0).astype(np.int64)
        keep = eligible < n_subframes
        out[c] = StreamArrivals(birth[keep], eligible[keep], rep[keep], parent[keep])
    return out


def generate_arrivals(gen: GenerationParams, n_vehicles: int, horizon: float,
                      n_subframes: int, gamma: int, rng: np.random.Generator,
                      sampler: GapSampler = exponential_gaps) -> list[dict]:
    return [generate_vehicle_arrivals(gen, horizon, n_subframes, gamma, rng, sampler)
            for _ in range(n_vehicles)]
