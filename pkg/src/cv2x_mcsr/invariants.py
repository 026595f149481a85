"""Replay a run trace and report every violated structural invariant.

Each checker returns a list of human-readable violations; empty means clean.
"""

from __future__ import annotations

from collections import defaultdict, deque

from .mac import next_use
from .model import GroupingOption, PacketClass, PRIORITY_ORDER


def check_internal_exclusion(trace, n_csr: int, gamma: int) -> list:
    """No vehicle ever holds the same grid address on two of its CSRs."""
    addrs: dict = defaultdict(lambda: [None] * n_csr)
    bad = []
    by_t = defaultdict(list)
    for ev in trace:
        if ev[6] == "reselect":
            by_t[ev[0]].append(ev)
    for t in sorted(by_t):
        touched = set()
        for _, v, j, sf, sc, *_ in by_t[t]:
            addrs[v][j] = sc * gamma + sf
            touched.add(v)
        for v in sorted(touched):
            held = [a for a in addrs[v] if a is not None]
            if len(set(held)) != len(held):
                bad.append(f"t={t}: vehicle {v} holds duplicate addresses {held}")
    return bad


def check_collisions(trace) -> list:
    """Collide events mark exactly the transmissions that share (t, subchannel)."""
    tx = defaultdict(list)
    marked = set()
    for ev in trace:
        if ev[6] == "transmit":
            tx[(ev[0], ev[4])].append((ev[0], ev[1], ev[2]))
        elif ev[6] == "collide":
            marked.add((ev[0], ev[1], ev[2]))
    expect = {k for txs in tx.values() if len(txs) > 1 for k in txs}
    bad = [f"unmarked collision {k}" for k in sorted(expect - marked)]
    bad += [f"spurious collision {k}" for k in sorted(marked - expect)]
    return bad


def check_scheduling(trace, grouping: GroupingOption, gamma: int, n_subframes: int) -> list:
    """Per-CSR priority work conservation and per-stream FIFO order.

    Replays queues from enqueue/transmit events and reconstructs every
    reserved occasion from the reselect events.  At each occasion the CSR must
    send the head of its best-ranked non-empty queue, and must send something
    whenever one of its queues is non-empty.  Transmissions outside occasions
    are violations too.
    """
    events = defaultdict(list)
    for ev in trace:
        events[ev[0]].append(ev)
    queues: dict = defaultdict(deque)
    next_occ: dict = {}
    bad = []
    letter = {c.letter: c for c in PacketClass}
    groups = [tuple(g) for g in grouping.groups]
    # start-up selections are logged at t=0 and may be used in that subframe
    for ev in events.get(0, ()):
        if ev[6] == "reselect":
            next_occ[(ev[1], ev[2])] = ev[3]
    for t in range(n_subframes):
        evs = events.get(t, ())
        txs = {}
        for ev in evs:
            kind = ev[6]
            if kind == "enqueue":
                queues[(ev[1], letter[ev[5]])].append(ev[7])
            elif kind == "transmit":
                txs[(ev[1], ev[2])] = ev
        due = [k for k, tt in next_occ.items() if tt == t]
        for k in txs:
            if next_occ.get(k) != t:
                bad.append(f"t={t}: vehicle {k[0]} csr {k[1]} sent outside its occasion")
        for v, j in sorted(due):
            waiting = [c for c in groups[j] if queues[(v, c)]]
            ev = txs.get((v, j))
            if ev is None:
                if waiting:
                    bad.append(f"t={t}: vehicle {v} csr {j} idle with {waiting[0].letter} queued")
                continue
            c = letter[ev[5]]
            if c not in groups[j]:
                bad.append(f"t={t}: vehicle {v} csr {j} sent {c.letter} outside its group")
                continue
            if not waiting or waiting[0] is not c:
                bad.append(f"t={t}: vehicle {v} csr {j} sent {c.letter} "
                           f"ahead of {waiting[0].letter if waiting else 'nothing'}")
            q = queues[(v, c)]
            if not q or q[0] != ev[7]:
                bad.append(f"t={t}: vehicle {v} {c.letter} packet {ev[7]} sent out of FIFO order")
                if ev[7] in q:
                    q.remove(ev[7])
            else:
                q.popleft()
        for k in due:
            next_occ[k] = t + gamma
        if t == 0:
            continue
        for ev in evs:
            if ev[6] == "reselect":
                next_occ[(ev[1], ev[2])] = next_use(t, ev[3], gamma)
    return bad


def check_conservation(report) -> list:
    """generated = transmitted + dropped + still queued, per stream."""
    bad = []
    for c in PRIORITY_ORDER:
        g = report.generated[c]
        rhs = report.transmitted[c] + report.drops[c] + report.queued[c]
        if g != rhs:
            bad.append(f"{c.letter}: generated {g} != transmitted+dropped+queued {rhs}")
    return bad


def check_all(report, grouping: GroupingOption, n_subframes: int) -> dict:
    tr = report.trace
    if tr is None:
        raise ValueError("run the scenario with trace=True")
    return {
        "internal_exclusion": check_internal_exclusion(tr, report.n_csr, report.gamma),
        "scheduling": check_scheduling(tr, grouping, report.gamma, n_subframes),
        "collisions": check_collisions(tr),
        "conservation": check_conservation(report),
    }
