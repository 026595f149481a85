"""Subframe-by-subframe reference engine.

Slow and literal: every subframe it enqueues that subframe's arrivals, serves
each reserved occasion through the per-vehicle MAC state, detects collisions on
the grid, ticks reselection counters and resolves expiries.  It consumes the
random streams exactly like the fast engine, so for the same inputs both must
produce the same :class:`~cv2x_mcsr.simulator.RunRecord`.
"""

from __future__ import annotations

from collections import defaultdict

from .mac import (ResourcePool, VehicleMacState, enqueue, initial_reservations, next_use,
                  pop_head_of_line, resolve_reselections)
from .model import CsrPlan, GroupingOption, ScenarioConfig, PRIORITY_ORDER
from .simulator import STREAM_INDEX, MetricsReport, _setup, detect_collisions, reduce_record
from .traffic import PacketArrival


def run_scenario_lockstep(cfg: ScenarioConfig, plan: CsrPlan, grouping: GroupingOption,
                          trace: bool = False) -> MetricsReport:
    rec = simulate_record_lockstep(cfg, plan, grouping, trace=trace)
    return reduce_record(rec, cfg, grouping)


def simulate_record_lockstep(cfg: ScenarioConfig, plan: CsrPlan, grouping: GroupingOption,
                             trace: bool = False):
    grid, rng, rec = _setup(cfg, plan, grouping)
    tr = [] if trace else None
    rec.trace = tr
    N, n, gamma = cfg.N, plan.n_csr, plan.gamma
    T, W = rec.n_subframes, rec.warmup_ms
    sps = cfg.sps

    states = [VehicleMacState.for_grouping(v, plan, grouping, cfg.queue_capacity)
              for v in range(N)]

    by_time = defaultdict(list)
    for v in range(N):
        for c in PRIORITY_ORDER:
            a = rec.arrivals[v][c]
            for pid, (e, b, r, par) in enumerate(zip(a.eligible.tolist(), a.birth.tolist(),
                                                     a.rep.tolist(), a.parent.tolist())):
                by_time[e].append(PacketArrival(v, c, b, r, par, pid))

    collided = set()
    rec.collided = collided
    active = cfg.gen.has_traffic
    pool = ResourcePool(grid, sps.forbid_same_subframe)
    next_occ = [[None] * n for _ in range(N)]
    if active:
        addrs, counters = initial_reservations(pool, N, n, sps, rng)
        for v in range(N):
            states[v].addresses = addrs[v]
            states[v].counters = counters[v]
            for j in range(n):
                a = addrs[v][j]
                next_occ[v][j] = a % gamma
                if tr is not None:
                    tr.append((0, v, j, a % gamma, a // gamma, "-", "reselect", -1))
    else:
        addrs = [[None] * n for _ in range(N)]

    for t in range(T):
        for p in by_time.get(t, ()):
            st = states[p.vehicle_id]
            ok = enqueue(st, p)
            if tr is not None:
                tr.append((t, p.vehicle_id, grouping.csr_of(p.stream), -1, -1,
                           STREAM_INDEX[p.stream], "enqueue" if ok else "drop",
                           p.packet_id))
        if not active:
            continue
        occasions = [(v, j) for v in range(N) for j in range(n) if next_occ[v][j] == t]
        grid_use = defaultdict(list)
        for v, j in occasions:
            head = pop_head_of_line(states[v], j)
            if head is None:
                continue
            a = addrs[v][j]
            grid_use[a].append((v, j))
            rec.tx_time.append(t)
            rec.tx_vehicle.append(v)
            rec.tx_csr.append(j)
            rec.tx_sub.append(a // gamma)
            rec.tx_stream.append(STREAM_INDEX[head.stream])
            rec.tx_pid.append(head.packet_id)
            if tr is not None:
                tr.append((t, v, j, a % gamma, a // gamma, STREAM_INDEX[head.stream],
                           "transmit", head.packet_id))
        for v, j in detect_collisions(grid_use):
            collided.add((t, v, j))

        expired = []
        for v, j in occasions:
            states[v].counters[j] -= 1
            next_occ[v][j] = t + gamma
            if states[v].counters[j] == 0:
                expired.append((v, j))
        if expired:
            for v, j, old, new, c in resolve_reselections(pool, expired, addrs, sps, rng):
                states[v].counters[j] = c
                next_occ[v][j] = next_use(t, new % gamma, gamma)
                if tr is not None:
                    tr.append((t, v, j, new % gamma, new // gamma, "-", "reselect", -1))
        if t >= W:
            rec.held_sum += pool.n_held

    for st in states:
        for c in PRIORITY_ORDER:
            rec.queued[STREAM_INDEX[c]] += len(st.queues[c])
            rec.drops[STREAM_INDEX[c]] += st.drops[c]
    return rec
