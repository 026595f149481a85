"""Per-vehicle MAC state and semi-persistent scheduling (SPS) over the CSR grid.

Grid addresses are plain ints, subchannel-major: ``a = subchannel * gamma +
subframe``.  The allocatable share of the grid is the lowest ``alloc_fraction``
of that ordering, i.e. whole subchannel sets from the bottom of the band.

Sensing is idealised: every vehicle knows the current reservations of every
other vehicle as they stood at the start of the subframe.  Vehicles that
reselect in the same subframe cannot see each other's picks, which is the only
way two reservations end up on one address.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .model import CsrPlan, GroupingOption, PacketClass, StreamSet, priority_rank


class UnsatisfiableReservation(RuntimeError):
    """The vehicle's own reservations already cover the whole grid."""


@dataclass(frozen=True)
class SpsConfig:
    resel_counter_min: int = 5
    resel_counter_max: int = 15
    p_keep: float = 0.0
    alloc_fraction: float = 0.8
    # Kept for completeness; idealised sensing has no finite look-back.
    sensing_window: int = 1000
    subchannels: int = 25
    forbid_same_subframe: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p_keep <= 0.8:
            # p_keep = 1 is allowed only through SpsConfig.unchecked (tests).
            if not getattr(self, "_unchecked", False):
                raise ValueError("p_keep must lie in [0, 0.8]")
        if not 0.0 < self.alloc_fraction <= 1.0:
            raise ValueError("alloc_fraction must lie in (0, 1]")
        if not 1 <= self.resel_counter_min <= self.resel_counter_max:
            raise ValueError("need 1 <= resel_counter_min <= resel_counter_max")
        if self.subchannels < 1:
            raise ValueError("subchannels must be >= 1")

    @classmethod
    def unchecked(cls, **kw) -> "SpsConfig":
        """Build a config outside the standard's p_keep range (test use)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "_unchecked", True)
        defaults = {f: getattr(cls, f) for f in cls.__dataclass_fields__}
        defaults.update(kw)
        for k, v in defaults.items():
            object.__setattr__(obj, k, v)
        obj.__post_init__()
        return obj


class CsrGrid:
    """``subchannels x gamma`` single-subframe resources of one selection window."""

    def __init__(self, gamma: int, subchannels: int = 25, alloc_fraction: float = 0.8):
        if gamma < 1 or subchannels < 1:
            raise ValueError("grid must be non-empty")
        self.gamma = gamma
        self.subchannels = subchannels
        self.alloc_fraction = alloc_fraction
        self.csr_tot = gamma * subchannels
        self.n_alloc = max(1, int(alloc_fraction * self.csr_tot + 1e-9))

    def address(self, subframe: int, subchannel: int) -> int:
        if not (0 <= subframe < self.gamma and 0 <= subchannel < self.subchannels):
            raise ValueError(f"address ({subframe}, {subchannel}) is off the grid")
        return subchannel * self.gamma + subframe

    def subframe(self, a: int) -> int:
        return a % self.gamma

    def subchannel(self, a: int) -> int:
        return a // self.gamma

    def coords(self, a: int) -> tuple[int, int]:
        return a % self.gamma, a // self.gamma

    def allocatable(self) -> range:
        return range(self.n_alloc)

    def __repr__(self):
        return f"CsrGrid(gamma={self.gamma}, S={self.subchannels}, CSR_tot={self.csr_tot})"


def _expand_subframes(grid: CsrGrid, own: Iterable[int]) -> set:
    subframes = {grid.subframe(a) for a in own}
    return {grid.address(s, c) for s in subframes for c in range(grid.subchannels)}


def sps_select_resource(grid: CsrGrid, sensed_occupied: Iterable[int],
                        own_reserved: Iterable[int], rng: random.Random,
                        forbid_same_subframe: bool = False) -> int:
    """Pick a resource uniformly among the allocatable, unoccupied addresses.

    Falls back to the whole grid minus the vehicle's own reservations when
    every allocatable address is excluded.
    """
    sensed = set(sensed_occupied)
    own = set(own_reserved)
    if forbid_same_subframe:
        own = _expand_subframes(grid, own)
    cands = [a for a in grid.allocatable() if a not in sensed and a not in own]
    if not cands:
        cands = [a for a in range(grid.csr_tot) if a not in own]
    if not cands:
        raise UnsatisfiableReservation("own reservations cover the entire grid")
    return cands[rng.randrange(len(cands))]


class ResourcePool:
    """Reservation bookkeeping for one collision domain.

    Keeps holder counts per address and an O(1) indexable list of free
    allocatable addresses, so a selection costs O(1) instead of a scan.
    """

    def __init__(self, grid: CsrGrid, forbid_same_subframe: bool = False):
        self.grid = grid
        self.forbid_same_subframe = forbid_same_subframe
        self.count = [0] * grid.csr_tot
        self.free = list(range(grid.n_alloc))
        self.pos = list(range(grid.n_alloc)) + [-1] * (grid.csr_tot - grid.n_alloc)
        self.n_held = 0

    def hold(self, a: int):
        if self.count[a] == 0:
            self.n_held += 1
            i = self.pos[a]
            if i >= 0:
                last = self.free.pop()
                if last != a:
                    self.free[i] = last
                    self.pos[last] = i
                self.pos[a] = -1
        self.count[a] += 1

    def release(self, a: int):
        if self.count[a] <= 0:
            raise RuntimeError(f"release of unheld address {a}")
        self.count[a] -= 1
        if self.count[a] == 0:
            self.n_held -= 1
            if a < self.grid.n_alloc:
                self.pos[a] = len(self.free)
                self.free.append(a)

    def sensed_occupied(self, old: Optional[int] = None) -> set:
        """Addresses held by anyone except the reservation being reselected."""
        held = {a for a, n in enumerate(self.count) if n > 0}
        if old is not None and self.count[old] == 1:
            held.discard(old)
        return held

    def candidates(self, old: Optional[int], own: Iterable[int]) -> list:
        """Explicit candidate set; same support as :meth:`select`."""
        own = set(own)
        if self.forbid_same_subframe:
            own = _expand_subframes(self.grid, own)
        sensed = self.sensed_occupied(old)
        cands = [a for a in self.grid.allocatable() if a not in sensed and a not in own]
        if not cands:
            cands = [a for a in range(self.grid.csr_tot) if a not in own]
        return cands

    def select(self, old: Optional[int], own: set, rng: random.Random) -> int:
        if self.forbid_same_subframe:
            cands = self.candidates(old, own)
            if not cands:
                raise UnsatisfiableReservation("own reservations cover the entire grid")
            return cands[rng.randrange(len(cands))]
        free = self.free
        nf = len(free)
        old_ok = (old is not None and old < self.grid.n_alloc and self.count[old] == 1
                  and old not in own)
        total = nf + old_ok
        own_free = sum(1 for a in own if self.pos[a] >= 0)
        if total - own_free > 0:
            while True:
                u = rng.randrange(total)
                a = old if u == nf else free[u]
                if a not in own:
                    return a
        if len(own) >= self.grid.csr_tot:
            raise UnsatisfiableReservation("own reservations cover the entire grid")
        while True:
            a = rng.randrange(self.grid.csr_tot)
            if a not in own:
                return a


def draw_counter(sps: SpsConfig, rng: random.Random) -> int:
    return rng.randint(sps.resel_counter_min, sps.resel_counter_max)


def initial_reservations(pool: ResourcePool, n_vehicles: int, n_csr: int,
                         sps: SpsConfig, rng: random.Random):
    """Sequential start-up selection, vehicle by vehicle, with full knowledge.

    Returns ``(addresses, counters)`` as ``[vehicle][csr]`` lists.
    """
    addrs, counters = [], []
    for _ in range(n_vehicles):
        mine: list = []
        cs = []
        for _ in range(n_csr):
            a = pool.select(None, set(mine), rng)
            pool.hold(a)
            mine.append(a)
            cs.append(draw_counter(sps, rng))
        addrs.append(mine)
        counters.append(cs)
    return addrs, counters


def resolve_reselections(pool: ResourcePool, batch: Sequence[tuple[int, int]],
                         addrs: list, sps: SpsConfig, rng: random.Random) -> list:
    """Resolve every counter expiry of one subframe against a common snapshot.

    ``batch`` must be sorted by (vehicle, csr).  ``addrs`` is updated in place;
    pool holdings are updated only after all picks are made.  Returns
    ``[(vehicle, csr, old, new, counter)]``.
    """
    changes = []
    for v, j in batch:
        mine = addrs[v]
        old = mine[j]
        keep = sps.p_keep > 0 and rng.random() < sps.p_keep
        if keep:
            new = old
        else:
            own = {a for i, a in enumerate(mine) if i != j}
            new = pool.select(old, own, rng)
            mine[j] = new
        changes.append((v, j, old, new, draw_counter(sps, rng)))
    for v, j, old, new, _ in changes:
        if new != old:
            pool.release(old)
            pool.hold(new)
    return changes


def next_use(t: int, subframe: int, gamma: int) -> int:
    """First absolute subframe after ``t`` that falls on ``subframe`` of the window."""
    d = (subframe - t) % gamma
    return t + (d if d else gamma)


@dataclass
class VehicleMacState:
    vehicle_id: int
    plan: CsrPlan
    groups: tuple
    queue_capacity: int = 10
    queues: dict = field(default_factory=dict)
    drops: dict = field(default_factory=dict)
    addresses: list = field(default_factory=list)
    counters: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.groups) != self.plan.n_csr:
            raise ValueError("one stream group per CSR is required")
        for c in PacketClass:
            self.queues.setdefault(c, deque())
            self.drops.setdefault(c, 0)

    @classmethod
    def for_grouping(cls, vehicle_id: int, plan: CsrPlan, grouping: GroupingOption,
                     queue_capacity: int = 10) -> "VehicleMacState":
        return cls(vehicle_id, plan, tuple(grouping.groups), queue_capacity)

    def queue_length(self, c: PacketClass) -> int:
        return len(self.queues[c])


def enqueue(state: VehicleMacState, arrival) -> bool:
    """Append to the stream's FIFO; a full queue drops the packet."""
    q = state.queues[arrival.stream]
    if len(q) >= state.queue_capacity:
        state.drops[arrival.stream] += 1
        return False
    q.append(arrival)
    return True


def select_head_of_line(state: VehicleMacState, csr_index: int):
    """Head of the best-ranked non-empty queue among this CSR's streams."""
    if not 0 <= csr_index < state.plan.n_csr:
        raise IndexError(f"CSR index {csr_index} out of range")
    group: StreamSet = state.groups[csr_index]
    for c in group:  # StreamSet iterates in priority order
        q = state.queues[c]
        if q:
            return q[0]
    return None


def pop_head_of_line(state: VehicleMacState, csr_index: int):
    head = select_head_of_line(state, csr_index)
    if head is not None:
        state.queues[head.stream].popleft()
    return head


def sps_on_transmission(state: VehicleMacState, csr_index: int, rng: random.Random,
                        pool: ResourcePool, sps: SpsConfig) -> int:
    """Consume one reserved occasion; reselect when the counter runs out.

    Returns the (possibly new) address of the reservation.
    """
    state.counters[csr_index] -= 1
    if state.counters[csr_index] > 0:
        return state.addresses[csr_index]
    (_, _, _, new, counter), = resolve_reselections(
        pool, [(state.vehicle_id, csr_index)], {state.vehicle_id: state.addresses}, sps, rng)
    state.counters[csr_index] = counter
    return new


def rank_sorted(streams: Iterable[PacketClass]) -> list:
    return sorted(streams, key=priority_rank)
