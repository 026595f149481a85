"""Discrete-event simulation of multi-CSR SPS with per-stream priority queues.

The fast engine runs in two phases.  Reservation dynamics do not depend on
queue contents (the reselection counter ticks once per reserved occasion), so
phase one replays SPS event by event over counter expiries only.  Phase two
serves every (vehicle, CSR) queue set against its occasion sequence, touching
only arrivals and busy occasions.  Collisions are then found by grouping data
transmissions on (subframe, subchannel).

``cv2x_mcsr.lockstep`` advances the same model one subframe at a time and
produces identical records; the test-suite holds the two together.
"""

from __future__ import annotations

import heapq
import math
import random
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .mac import CsrGrid, ResourcePool, initial_reservations, next_use, resolve_reselections
from .model import CsrPlan, GroupingOption, PRIORITY_ORDER, ScenarioConfig
from .traffic import generate_arrivals

SUBFRAME = 0.001  # s
STREAM_INDEX = {c: i for i, c in enumerate(PRIORITY_ORDER)}

# Trace event kinds in their within-subframe order.
EVENT_ORDER = {"enqueue": 0, "drop": 0, "transmit": 1, "collide": 2, "reselect": 3}
TRACE_FIELDS = ("time_ms", "vehicle", "csr", "subframe", "subchannel_set", "stream",
                "event", "packet_id")


class ConsistencyError(RuntimeError):
    pass


@dataclass
class MetricsReport:
    """Outputs of one scenario run.

    Delays are in seconds.  ``inf`` marks a stream that had packets to send in
    the measurement span but delivered none; ``nan`` one that generated none.
    """

    d_avg: dict
    d_std: dict
    delay_samples: dict
    p_col: float
    p_col_per_csr: list
    cu: float
    cu_tx: float
    drops: dict
    generated: dict
    transmitted: dict
    queued: dict
    tx_samples: int
    collided_samples: int
    n_csr: int
    gamma: int
    trace: Optional[list] = field(default=None, repr=False)

    def as_dict(self) -> dict:
        def per_stream(d):
            return {c.name: v for c, v in d.items()}

        return {
            "n_csr": self.n_csr,
            "gamma": self.gamma,
            "d_avg_s": per_stream(self.d_avg),
            "d_std_s": per_stream(self.d_std),
            "delay_samples": per_stream(self.delay_samples),
            "p_col": self.p_col,
            "p_col_per_csr": list(self.p_col_per_csr),
            "cu": self.cu,
            "cu_tx": self.cu_tx,
            "drops": per_stream(self.drops),
            "generated": per_stream(self.generated),
            "transmitted": per_stream(self.transmitted),
            "queued": per_stream(self.queued),
            "tx_samples": self.tx_samples,
            "collided_samples": self.collided_samples,
        }


def measure_delay(birth_time: float, tx_time: float, subframe: float = SUBFRAME) -> float:
    """Generation to end of the transmitting subframe."""
    if tx_time < birth_time:
        raise ConsistencyError(f"transmission at {tx_time} precedes birth at {birth_time}")
    return tx_time + subframe - birth_time


def detect_collisions(occupancy: dict) -> set:
    """``{address: [transmitter, ...]}`` -> transmitters that share an address."""
    collided = set()
    for txs in occupancy.values():
        if len(txs) >= 2:
            collided.update(txs)
    return collided


def channel_utilization(held_per_sample: Iterable[int], csr_tot: int) -> float:
    """Mean fraction of the selection window's CSRs in use."""
    xs = list(held_per_sample)
    if not xs:
        return 0.0
    return float(sum(xs)) / (len(xs) * csr_tot)


@dataclass
class RunRecord:
    """Raw outcome of an engine run; both engines fill the same structure."""

    n_vehicles: int
    n_csr: int
    gamma: int
    subchannels: int
    n_subframes: int
    warmup_ms: int
    csr_tot: int
    arrivals: list
    tx_time: list = field(default_factory=list)
    tx_vehicle: list = field(default_factory=list)
    tx_csr: list = field(default_factory=list)
    tx_sub: list = field(default_factory=list)
    tx_stream: list = field(default_factory=list)
    tx_pid: list = field(default_factory=list)
    drops: list = field(default_factory=lambda: [0, 0, 0, 0])
    queued: list = field(default_factory=lambda: [0, 0, 0, 0])
    held_sum: int = 0
    trace: Optional[list] = None
    # filled by the lockstep engine only: {(t, vehicle, csr)} found on the grid
    collided: Optional[set] = None


def _rngs(seed: int):
    ss = np.random.SeedSequence(seed)
    traffic_ss, sps_ss = ss.spawn(2)
    return np.random.default_rng(traffic_ss), random.Random(int(sps_ss.generate_state(1)[0]))


def _setup(cfg: ScenarioConfig, plan: CsrPlan, grouping: GroupingOption):
    if grouping.n_csr != plan.n_csr:
        raise ValueError(f"grouping {grouping.index} has {grouping.n_csr} groups, "
                         f"plan needs {plan.n_csr}")
    gamma = plan.gamma
    n_sub = int(round(cfg.sim_duration * 1000))
    warm = int(round(cfg.warmup_for(gamma) * 1000))
    grid = CsrGrid(gamma, cfg.sps.subchannels, cfg.sps.alloc_fraction)
    traffic_rng, sps_rng = _rngs(cfg.seed)
    arrivals = generate_arrivals(cfg.gen, cfg.N, cfg.sim_duration, n_sub, gamma, traffic_rng)
    rec = RunRecord(cfg.N, plan.n_csr, gamma, grid.subchannels, n_sub, warm, grid.csr_tot,
                    arrivals)
    return grid, sps_rng, rec


def run_scenario(cfg: ScenarioConfig, plan: CsrPlan, grouping: GroupingOption,
                 trace: bool = False) -> MetricsReport:
    rec = simulate_record(cfg, plan, grouping, trace=trace)
    return reduce_record(rec, cfg, grouping)


def simulate_record(cfg: ScenarioConfig, plan: CsrPlan, grouping: GroupingOption,
                    trace: bool = False) -> RunRecord:
    grid, rng, rec = _setup(cfg, plan, grouping)
    if trace:
        rec.trace = []
    segments = _sps_phase(cfg, plan, grid, rng, rec)
    _queue_phase(cfg, grouping, grid, segments, rec)
    return rec


def _sps_phase(cfg, plan, grid, rng, rec):
    """Replay reservations; returns ``segments[v][j] = [(first_use, count, addr)]``."""
    N, n, gamma = cfg.N, plan.n_csr, plan.gamma
    T, W = rec.n_subframes, rec.warmup_ms
    segments = [[[] for _ in range(n)] for _ in range(N)]
    if not cfg.gen.has_traffic:
        return segments
    sps = cfg.sps
    pool = ResourcePool(grid, sps.forbid_same_subframe)
    addrs, counters = initial_reservations(pool, N, n, sps, rng)
    tr = rec.trace
    heap = []
    for v in range(N):
        for j in range(n):
            a = addrs[v][j]
            first = a % gamma
            segments[v][j].append((first, counters[v][j], a))
            heapq.heappush(heap, (first + (counters[v][j] - 1) * gamma, v, j))
            if tr is not None:
                tr.append((0, v, j, a % gamma, a // gamma, "-", "reselect", -1))

    held_sum = 0
    last = 0
    n_held = pool.n_held
    while heap and heap[0][0] < T:
        t = heap[0][0]
        batch = []
        while heap and heap[0][0] == t:
            _, v, j = heapq.heappop(heap)
            batch.append((v, j))
        held_sum += n_held * _overlap(last, t, W, T)
        last = t
        for v, j, old, new, c in resolve_reselections(pool, batch, addrs, sps, rng):
            first = next_use(t, new % gamma, gamma)
            segments[v][j].append((first, c, new))
            heapq.heappush(heap, (first + (c - 1) * gamma, v, j))
            if tr is not None:
                tr.append((t, v, j, new % gamma, new // gamma, "-", "reselect", -1))
        n_held = pool.n_held
    held_sum += n_held * _overlap(last, T, W, T)
    rec.held_sum = held_sum
    return segments


def _overlap(a, b, lo, hi):
    return max(0, min(b, hi) - max(a, lo))


def _queue_phase(cfg, grouping, grid, segments, rec):
    T, gamma, cap = rec.n_subframes, rec.gamma, cfg.queue_capacity
    tr = rec.trace
    groups = [[STREAM_INDEX[c] for c in g] for g in grouping.groups]
    for v in range(cfg.N):
        arr = rec.arrivals[v]
        streams = [arr[c] for c in PRIORITY_ORDER]
        for j, group in enumerate(groups):
            occ, sub = [], []
            for first, count, a in segments[v][j]:
                ts = range(first, min(first + count * gamma, T), gamma)
                occ.extend(ts)
                sub.extend([a // gamma] * len(ts))
            if len(group) == 1:
                s = group[0]
                el = streams[s].eligible.tolist()
                si = [0] * len(el)
                pi = list(range(len(el)))
            else:
                el_a = np.concatenate([streams[s].eligible for s in group])
                si_a = np.concatenate([np.full(len(streams[s]), k, dtype=np.int64)
                                       for k, s in enumerate(group)])
                pi_a = np.concatenate([np.arange(len(streams[s]), dtype=np.int64)
                                       for s in group])
                order = np.lexsort((pi_a, si_a, el_a))
                el, si, pi = el_a[order].tolist(), si_a[order].tolist(), pi_a[order].tolist()
            _serve(v, j, group, occ, sub, el, si, pi, cap, rec, tr, gamma)


def _serve(v, j, group, occ, sub, el, si, pi, cap, rec, tr, gamma):
    """Priority service of one CSR's queues over its reserved occasions."""
    qs = [deque() for _ in group]
    drops = [0] * len(group)
    na, no = len(el), len(occ)
    tx_t, tx_sub, tx_s, tx_p = [], [], [], []
    i = k = nq = 0
    single = len(group) == 1
    q0 = qs[0]
    while no:
        if nq == 0:
            if i >= na:
                break
            k = bisect_left(occ, el[i], k)
            if k >= no:
                break
        o = occ[k]
        while i < na and el[i] <= o:
            q = qs[si[i]]
            if len(q) < cap:
                q.append(pi[i])
                nq += 1
                if tr is not None:
                    tr.append((el[i], v, j, -1, -1, group[si[i]], "enqueue", pi[i]))
            else:
                drops[si[i]] += 1
                if tr is not None:
                    tr.append((el[i], v, j, -1, -1, group[si[i]], "drop", pi[i]))
            i += 1
        if single:
            s = 0
            p = q0.popleft()
        else:
            for s, q in enumerate(qs):
                if q:
                    p = q.popleft()
                    break
        nq -= 1
        tx_t.append(o)
        tx_sub.append(sub[k])
        tx_s.append(group[s])
        tx_p.append(p)
        k += 1
        if k >= no:
            break
    while i < na:
        q = qs[si[i]]
        if len(q) < cap:
            q.append(pi[i])
            if tr is not None:
                tr.append((el[i], v, j, -1, -1, group[si[i]], "enqueue", pi[i]))
        else:
            drops[si[i]] += 1
            if tr is not None:
                tr.append((el[i], v, j, -1, -1, group[si[i]], "drop", pi[i]))
        i += 1
    for s, q in enumerate(qs):
        rec.queued[group[s]] += len(q)
        rec.drops[group[s]] += drops[s]
    rec.tx_time.extend(tx_t)
    rec.tx_sub.extend(tx_sub)
    rec.tx_stream.extend(tx_s)
    rec.tx_pid.extend(tx_p)
    rec.tx_vehicle.extend([v] * len(tx_t))
    rec.tx_csr.extend([j] * len(tx_t))
    if tr is not None:
        for t, c, s, p in zip(tx_t, tx_sub, tx_s, tx_p):
            tr.append((t, v, j, t % gamma, c, s, "transmit", p))


def _tx_arrays(rec: RunRecord):
    t = np.asarray(rec.tx_time, dtype=np.int64)
    veh = np.asarray(rec.tx_vehicle, dtype=np.int64)
    csr = np.asarray(rec.tx_csr, dtype=np.int64)
    order = np.lexsort((csr, veh, t))
    return (t[order], veh[order], csr[order],
            np.asarray(rec.tx_sub, dtype=np.int64)[order],
            np.asarray(rec.tx_stream, dtype=np.int64)[order],
            np.asarray(rec.tx_pid, dtype=np.int64)[order])


def collided_mask(t: np.ndarray, sub: np.ndarray, subchannels: int) -> np.ndarray:
    """True for every transmission sharing (subframe, subchannel) with another."""
    if len(t) == 0:
        return np.zeros(0, dtype=bool)
    key = t * subchannels + sub
    _, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    return counts[inv] >= 2


def reduce_record(rec: RunRecord, cfg: ScenarioConfig, grouping: GroupingOption) -> MetricsReport:
    t, veh, csr, sub, stream, pid = _tx_arrays(rec)
    coll = collided_mask(t, sub, rec.subchannels)
    W, T = rec.warmup_ms, rec.n_subframes
    meas = t >= W

    birth = np.empty(len(t))
    rep = np.empty(len(t), dtype=np.int64)
    for c in PRIORITY_ORDER:
        s = STREAM_INDEX[c]
        m = stream == s
        if not m.any():
            continue
        per_v = [rec.arrivals[v][c] for v in range(rec.n_vehicles)]
        offset = np.concatenate([[0], np.cumsum([len(a) for a in per_v])[:-1]]).astype(np.int64)
        flat = offset[veh[m]] + pid[m]
        birth[m] = np.concatenate([a.birth for a in per_v])[flat]
        rep[m] = np.concatenate([a.rep for a in per_v])[flat]
    delay = (t + 1) / 1000.0 - birth
    if len(delay) and delay.min() < 0:
        raise ConsistencyError("a packet was transmitted before it was generated")

    d_avg, d_std, n_samples = {}, {}, {}
    generated, transmitted, drops, queued = {}, {}, {}, {}
    for c in PRIORITY_ORDER:
        s = STREAM_INDEX[c]
        m = meas & (stream == s)
        if cfg.delay_attribution == "first":
            m &= rep == 0
        x = delay[m]
        gen_meas = sum(int(np.count_nonzero(rec.arrivals[v][c].eligible >= W))
                       for v in range(rec.n_vehicles))
        n_samples[c] = int(len(x))
        if len(x):
            d_avg[c] = float(x.mean())
            d_std[c] = float(x.std(ddof=1)) if len(x) > 1 else 0.0
        else:
            d_avg[c] = math.inf if gen_meas else math.nan
            d_std[c] = math.nan
        generated[c] = sum(len(rec.arrivals[v][c]) for v in range(rec.n_vehicles))
        transmitted[c] = int(np.count_nonzero(stream == s))
        drops[c] = rec.drops[s]
        queued[c] = rec.queued[s]

    per_csr = []
    for j in range(rec.n_csr):
        m = meas & (csr == j)
        n = int(np.count_nonzero(m))
        per_csr.append(float(np.count_nonzero(coll & m)) / n if n else math.nan)
    valid = [p for p in per_csr if not math.isnan(p)]
    p_col = float(sum(valid) / len(valid)) if valid else 0.0

    span = T - W
    cu = rec.held_sum / (span * rec.csr_tot) if span > 0 else 0.0
    if meas.any():
        distinct_tx = len(np.unique(t[meas] * rec.subchannels + sub[meas]))
    else:
        distinct_tx = 0
    cu_tx = distinct_tx / (span * rec.subchannels) if span > 0 else 0.0

    trace = None
    if rec.trace is not None:
        trace = _finish_trace(rec, t, veh, csr, coll)

    return MetricsReport(
        d_avg=d_avg, d_std=d_std, delay_samples=n_samples, p_col=p_col,
        p_col_per_csr=per_csr, cu=float(cu), cu_tx=float(cu_tx), drops=drops,
        generated=generated, transmitted=transmitted, queued=queued,
        tx_samples=int(np.count_nonzero(meas)),
        collided_samples=int(np.count_nonzero(coll & meas)),
        n_csr=rec.n_csr, gamma=rec.gamma, trace=trace,
    )


def _finish_trace(rec, t, veh, csr, coll):
    events = list(rec.trace)
    gamma = rec.gamma
    sub_by_key = {}
    for ev in events:
        if ev[6] == "transmit":
            sub_by_key[(ev[0], ev[1], ev[2])] = ev
    for tt, v, j in zip(t[coll].tolist(), veh[coll].tolist(), csr[coll].tolist()):
        ev = sub_by_key[(tt, v, j)]
        events.append((tt, v, j, tt % gamma, ev[4], ev[5], "collide", ev[7]))
    events.sort(key=lambda e: (e[0], EVENT_ORDER[e[6]], e[1], e[2], e[5] if e[5] != "-" else -1,
                               e[7]))
    letters = [c.letter for c in PRIORITY_ORDER]
    return [(e[0], e[1], e[2], e[3], e[4], letters[e[5]] if e[5] != "-" else "-", e[6], e[7])
            for e in events]


def format_trace(trace: list) -> str:
    """Line-delimited trace, one comma-separated record per event."""
    lines = [",".join(TRACE_FIELDS)]
    lines += [",".join(str(x) for x in ev) for ev in trace]
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> list:
    rows = []
    for line in text.splitlines()[1:]:
        if not line:
            continue
        f = line.split(",")
        rows.append((int(f[0]), int(f[1]), int(f[2]), int(f[3]), int(f[4]), f[5], f[6], int(f[7])))
    return rows
