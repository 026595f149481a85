"""Domain types shared across the simulator and the allocation planner."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

# Selection-window lengths the sidelink standard permits, in ms.
GAMMA_VALUES = (20, 50, 100)
MAX_CSR = 4


class PacketClass(enum.Enum):
    HPD = "H"
    DENM = "D"
    CAM = "C"
    MHD = "M"

    @property
    def rank(self) -> int:
        return _RANK[self]

    @property
    def letter(self) -> str:
        return self.value

    @classmethod
    def from_letter(cls, letter: str) -> "PacketClass":
        return cls(letter.upper())

    def __lt__(self, other):
        if not isinstance(other, PacketClass):
            return NotImplemented
        return self.rank < other.rank


_RANK = {PacketClass.HPD: 0, PacketClass.DENM: 1, PacketClass.CAM: 2, PacketClass.MHD: 3}

# Service order: HPD first, MHD last.
PRIORITY_ORDER = (PacketClass.HPD, PacketClass.DENM, PacketClass.CAM, PacketClass.MHD)


def priority_rank(c: PacketClass) -> int:
    """Rank of a stream in the service order; lower is served first."""
    return _RANK[c]


@dataclass(frozen=True)
class GenerationParams:
    """Packet generation parameters of one vehicle.

    ``T_C=None`` disables the periodic CAM stream.  ``rep_interval=None``
    spaces repetitions one selection window apart.
    """

    lambda_H: float = 1.0
    lambda_D: float = 1.0
    lambda_M: float = 10.0
    T_C: Optional[float] = 0.1
    rep_H: int = 8
    rep_D: int = 5
    rep_interval: Optional[float] = None

    def __post_init__(self):
        for name in ("lambda_H", "lambda_D", "lambda_M"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite rate >= 0, got {v}")
        if self.T_C is not None and not (0.1 - 1e-12 <= self.T_C <= 1.0 + 1e-12):
            raise ValueError(f"T_C must lie in [0.1, 1.0] s, got {self.T_C}")
        if self.rep_H < 1 or self.rep_D < 1:
            raise ValueError("repetition counts must be >= 1")
        if self.rep_interval is not None and self.rep_interval <= 0:
            raise ValueError("rep_interval must be positive")

    def rate(self, c: PacketClass) -> float:
        """Event rate of a stream in events/s (1/T_C for CAM)."""
        if c is PacketClass.HPD:
            return self.lambda_H
        if c is PacketClass.DENM:
            return self.lambda_D
        if c is PacketClass.MHD:
            return self.lambda_M
        return 0.0 if self.T_C is None else 1.0 / self.T_C

    def repetitions(self, c: PacketClass) -> int:
        if c is PacketClass.HPD:
            return self.rep_H
        if c is PacketClass.DENM:
            return self.rep_D
        return 1

    def effective_rate(self, c: PacketClass) -> float:
        """MAC packets per second, repetitions included."""
        return self.rate(c) * self.repetitions(c)

    @property
    def has_traffic(self) -> bool:
        return any(self.rate(c) > 0 for c in PacketClass)

    def masked(self, keep: Iterable[PacketClass]) -> "GenerationParams":
        """Copy with every stream outside ``keep`` switched off."""
        keep = set(keep)
        return GenerationParams(
            lambda_H=self.lambda_H if PacketClass.HPD in keep else 0.0,
            lambda_D=self.lambda_D if PacketClass.DENM in keep else 0.0,
            lambda_M=self.lambda_M if PacketClass.MHD in keep else 0.0,
            T_C=self.T_C if PacketClass.CAM in keep else None,
            rep_H=self.rep_H,
            rep_D=self.rep_D,
            rep_interval=self.rep_interval,
        )


class StreamSet:
    """Non-empty set of streams, iterated in priority order."""

    __slots__ = ("_members",)

    def __init__(self, members: Iterable[PacketClass | str]):
        items = [PacketClass.from_letter(m) if isinstance(m, str) else m for m in members]
        if not items:
            raise ValueError("a stream set must not be empty")
        if len(set(items)) != len(items):
            raise ValueError(f"duplicate streams in {items}")
        self._members = tuple(sorted(items, key=priority_rank))

    @classmethod
    def parse(cls, text: str) -> "StreamSet":
        """``"HD"`` or ``"H,D"`` -> {HPD, DENM}."""
        return cls(ch for ch in text if ch.isalpha())

    def __iter__(self) -> Iterator[PacketClass]:
        return iter(self._members)

    def __len__(self):
        return len(self._members)

    def __contains__(self, c):
        return c in self._members

    def __eq__(self, other):
        if isinstance(other, StreamSet):
            return self._members == other._members
        return NotImplemented

    def __hash__(self):
        return hash(self._members)

    def __repr__(self):
        return "{" + ",".join(m.letter for m in self._members) + "}"

    @property
    def label(self) -> str:
        return "".join(m.letter for m in self._members)

    def as_set(self) -> frozenset:
        return frozenset(self._members)


ALL_STREAMS = StreamSet(PRIORITY_ORDER)


def stream_set_params(B: StreamSet, gen: GenerationParams) -> dict:
    """Generation parameters of exactly the streams in ``B``.

    >>> sorted(stream_set_params(StreamSet("HC"), GenerationParams()))
    ['T_C', 'lambda_H']
    """
    if B is None or len(B) == 0:
        raise ValueError("stream set must be non-empty")
    out = {}
    for c in B:
        if c is PacketClass.CAM:
            out["T_C"] = gen.T_C
        else:
            out[f"lambda_{c.letter}"] = gen.rate(c)
    return out


@dataclass(frozen=True)
class GroupingOption:
    """Indexed partition of the four streams over a vehicle's CSRs."""

    index: int
    groups: tuple[StreamSet, ...]

    def __post_init__(self):
        if not 1 <= self.index <= 15:
            raise ValueError(f"grouping index must lie in [1, 15], got {self.index}")
        seen: set = set()
        for g in self.groups:
            if seen & g.as_set():
                raise ValueError(f"groups overlap in option {self.index}")
            seen |= g.as_set()
        if seen != set(PacketClass):
            raise ValueError(f"option {self.index} does not cover all four streams")

    @property
    def n_csr(self) -> int:
        return len(self.groups)

    def csr_of(self, c: PacketClass) -> int:
        for j, g in enumerate(self.groups):
            if c in g:
                return j
        raise KeyError(c)

    def __str__(self):
        return " | ".join(repr(g) for g in self.groups)


@dataclass(frozen=True)
class CsrPlan:
    n_csr: int
    gamma: int
    n_g_star: int = 1

    def __post_init__(self):
        if not 1 <= self.n_csr <= MAX_CSR:
            raise ValueError(f"n_CSR must lie in [1, {MAX_CSR}], got {self.n_csr}")
        if self.gamma not in GAMMA_VALUES:
            raise ValueError(f"gamma must be one of {GAMMA_VALUES} ms, got {self.gamma}")


@dataclass(frozen=True)
class Weights:
    w_H: float = 0.4
    w_D: float = 0.3
    w_C: float = 0.2
    w_M: float = 0.1

    def __post_init__(self):
        ws = (self.w_H, self.w_D, self.w_C, self.w_M)
        if not all(0 < w < 1 for w in ws):
            raise ValueError("each weight must lie in (0, 1)")
        if not (self.w_H > self.w_D > self.w_C > self.w_M):
            raise ValueError("weights must follow the priority order w_H > w_D > w_C > w_M")
        if abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(ws)}")

    def __getitem__(self, c: PacketClass) -> float:
        return getattr(self, f"w_{c.letter}")

    def as_dict(self) -> dict:
        return {c: self[c] for c in PRIORITY_ORDER}


def _default_sps():
    from .mac import SpsConfig

    return SpsConfig()


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one simulation run needs apart from the plan and grouping.

    ``warmup=None`` means ten selection windows.
    """

    N: int
    gen: GenerationParams = field(default_factory=GenerationParams)
    weights: Weights = field(default_factory=Weights)
    sim_duration: float = 100.0
    warmup: Optional[float] = None
    seed: int = 1
    queue_capacity: int = 10
    sps: "object" = field(default_factory=_default_sps)
    delay_attribution: str = "all"

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if self.warmup is not None and not (0 <= self.warmup < self.sim_duration):
            raise ValueError("need sim_duration > warmup >= 0")
        if self.sim_duration <= 0:
            raise ValueError("sim_duration must be positive")
        if self.delay_attribution not in ("all", "first"):
            raise ValueError("delay_attribution must be 'all' or 'first'")

    def warmup_for(self, gamma: int) -> float:
        w = 10 * gamma / 1000.0 if self.warmup is None else self.warmup
        if w >= self.sim_duration:
            raise ValueError("warmup must be shorter than sim_duration")
        return w
