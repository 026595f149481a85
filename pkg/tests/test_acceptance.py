"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line, shown in the terminal summary.
The heavy simulation sweeps are shared between criteria through
module-scoped fixtures.
"""

import math
import time

import numpy as np
import pytest

from cv2x_mcsr.allocator import allocate, enumerate_groupings, grouping, n_max, sum_average_delay
from cv2x_mcsr.invariants import check_all
from cv2x_mcsr.model import (CsrPlan, GenerationParams, PacketClass, PRIORITY_ORDER, ScenarioConfig,
                             Weights)
from cv2x_mcsr.simulator import format_trace, run_scenario
from cv2x_mcsr.sweep import SweepSpec, run_sweep, run_sweep_rows

HEAVY = GenerationParams(lambda_H=1.0, lambda_D=1.0, lambda_M=10.0, T_C=0.1)
LIGHT = GenerationParams(lambda_H=0.1, lambda_D=0.1, lambda_M=1.0, T_C=0.1)
SEEDS = 5
DURATION = 100.0


def _stub(group, ctx):
    return {c: 0.01 for c in group}


def _by(rows, N, mode, key):
    return np.array([r[key] for r in rows if r["N"] == N and r["mode"] == mode], dtype=float)


def _se(x):
    return float(np.std(x, ddof=1) / math.sqrt(len(x)))


@pytest.fixture(scope="module")
def heavy_rows():
    t0 = time.time()
    spec = SweepSpec(N_values=[50, 150, 300, 399, 450], gen=HEAVY, mode="multi", reps=SEEDS,
                     duration=DURATION)
    rows = run_sweep_rows(spec)
    base = SweepSpec(N_values=[450], gen=HEAVY, mode="single", reps=SEEDS, duration=DURATION)
    rows += run_sweep_rows(base)
    return rows, time.time() - t0


@pytest.fixture(scope="module")
def light_rows():
    t0 = time.time()
    spec = SweepSpec(N_values=[50, 99, 150, 300, 450], gen=LIGHT, mode="both", reps=SEEDS,
                     duration=DURATION)
    return run_sweep_rows(spec), time.time() - t0


def test_c01_capacity_table(verdict):
    expect = {1: (400, 1000, 2000), 2: (200, 500, 1000), 3: (134, 334, 667), 4: (100, 250, 500)}
    got = {n: tuple(n_max(n, g) for g in (20, 50, 100)) for n in range(1, 5)}
    ok = got == expect
    verdict(1, "n_max reproduces the 4x3 capacity table exactly", ok, f"got {got}")
    assert ok


def _partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in _partitions(rest):
        for i in range(len(p)):
            yield p[:i] + [[first] + p[i]] + p[i + 1:]
        yield [[first]] + p


def test_c02_grouping_table(verdict):
    expect = {
        1: ["HDCM"], 2: ["C", "HDM"], 3: ["H", "DCM"], 4: ["D", "HCM"], 5: ["M", "HDC"],
        6: ["HC", "DM"], 7: ["HM", "DC"], 8: ["HD", "CM"], 9: ["C", "H", "DM"],
        10: ["H", "D", "CM"], 11: ["C", "M", "HD"], 12: ["D", "C", "HM"], 13: ["D", "M", "HC"],
        14: ["H", "M", "DC"], 15: ["H", "D", "C", "M"],
    }
    got = {o.index: [g.label for g in o.groups] for k in range(1, 5) for o in enumerate_groupings(k)}
    counts = tuple(len(enumerate_groupings(k)) for k in range(1, 5))
    brute = {}
    for p in _partitions(list(PacketClass)):
        brute.setdefault(len(p), set()).add(frozenset(frozenset(b) for b in p))
    complete = all(
        {frozenset(g.as_set() for g in o.groups) for o in enumerate_groupings(k)} == brute[k]
        for k in range(1, 5))
    stirling = (len(brute[2]), len(brute[3])) == (7, 6)
    ok = got == expect and counts == (1, 7, 6, 1) and complete and stirling
    verdict(2, "15 indexed groupings match the table, counts (1,7,6,1)", ok,
            f"counts {counts}, partitions complete={complete}")
    assert ok


def test_c03_allocation_thresholds(verdict):
    bounds = [(100, 4, 20), (134, 3, 20), (200, 2, 20), (400, 1, 20), (500, 2, 50),
              (1000, 1, 50), (2000, 1, 100)]
    t0 = time.time()
    bad = []
    for N in range(1, 2001):
        want = next((n, g) for b, n, g in bounds if N <= b)
        plan = allocate(N, HEAVY, Weights(), _stub)
        if (plan.n_csr, plan.gamma) != want or N > n_max(plan.n_csr, plan.gamma):
            bad.append(N)
    dt = time.time() - t0
    ok = not bad and dt < 1.0
    verdict(3, "allocate follows the thresholds for every N in [1, 2000]", ok,
            f"{len(bad)} mismatches, {dt:.3f} s")
    assert ok


def test_c04_weighted_sum_oracle(verdict):
    rng = np.random.default_rng(4)
    worst = 0.0
    n = 0
    while n < 1000:
        raw = np.sort(rng.uniform(0.01, 1.0, 4))[::-1]
        if len(set(raw)) < 4:
            continue
        w = Weights(*(raw / raw.sum()).tolist())
        d = dict(zip(PRIORITY_ORDER, rng.uniform(0.0, 5.0, 4).tolist()))
        ref = math.fsum([w.w_H * d[PRIORITY_ORDER[0]], w.w_D * d[PRIORITY_ORDER[1]],
                         w.w_C * d[PRIORITY_ORDER[2]], w.w_M * d[PRIORITY_ORDER[3]]])
        got = sum_average_delay(d, w)
        worst = max(worst, abs(got - ref) / abs(ref))
        n += 1
    ok = worst <= 1e-12
    verdict(4, "weighted delay sum matches brute force on 1000 vectors", ok,
            f"max rel err {worst:.2e}")
    assert ok


def test_c05_delay_step_shape(verdict, heavy_rows):
    rows, dt = heavy_rows
    # (a) flat within every (n_CSR, gamma) regime that holds more than one N
    regimes = {}
    for N in (50, 150, 300, 399, 450):
        r = next(x for x in rows if x["N"] == N and x["mode"] == "multi")
        regimes.setdefault((r["n_CSR"], r["gamma"]), []).append(N)
    spread = {}
    for key, ns in regimes.items():
        if len(ns) < 2:
            continue
        for c in "HDCM":
            means = [float(np.mean(_by(rows, N, "multi", f"d_avg_{c}"))) for N in ns]
            spread[(key, c)] = (max(means) - min(means)) / min(means)
    flat = bool(spread) and all(v < 0.15 for v in spread.values())
    # (b) upward step from (1, 20 ms) at N=399 to (2, 50 ms) at N=450, one-sided 3 sigma
    steps = {}
    for c in "CM":
        hi, lo = _by(rows, 450, "multi", f"d_avg_{c}"), _by(rows, 399, "multi", f"d_avg_{c}")
        z = (hi.mean() - lo.mean()) / math.hypot(_se(hi), _se(lo))
        steps[c] = z
    step = all(z > 3.0 for z in steps.values())
    ok = flat and step and dt < 600
    worst = max(spread.values()) if spread else float("nan")
    verdict(5, "delay flat within a regime and steps up at the 20->50 ms boundary", ok,
            f"max in-regime spread {100 * worst:.1f}%, z(C)={steps['C']:.1f}, "
            f"z(M)={steps['M']:.1f}, sweep {dt:.0f} s")
    assert ok


def test_c06_multi_csr_delay_gain(verdict, heavy_rows):
    rows, _ = heavy_rows
    plan = next(r for r in rows if r["N"] == 450 and r["mode"] == "multi")
    assert (plan["n_CSR"], plan["gamma"]) == (2, 50)
    detail = []
    ok = True
    for c in "CM":
        m = _by(rows, 450, "multi", f"d_avg_{c}")
        s = _by(rows, 450, "single", f"d_avg_{c}")
        # reduction >= 20%  <=>  0.8 d_single - d_multi >= 0, paired over seeds
        x = 0.8 * s - m
        z = x.mean() / _se(x)
        red = 100.0 * (s.mean() - m.mean()) / s.mean()
        ok &= bool(z > 3.0)
        detail.append(f"{c}: {red:.1f}% (z={z:.1f})")
    verdict(6, f"2 CSRs at N=450 cut CAM and MHD delay by >= 20% (n_G*={plan['n_G_star']})",
            ok, ", ".join(detail))
    assert ok


def test_c07_collision_overhead(verdict, light_rows):
    rows, _ = light_rows
    ns = (50, 99, 150, 450)
    pm = {N: float(np.mean(_by(rows, N, "multi", "p_col"))) for N in ns}
    ps = {N: float(np.mean(_by(rows, N, "single", "p_col"))) for N in ns}
    above = all(pm[N] >= ps[N] for N in ns)
    small = all(pm[N] - ps[N] < 0.02 for N in ns)
    mono = True
    for mode, p in (("multi", pm), ("single", ps)):
        groups = {}
        for N in ns:
            r = next(x for x in rows if x["N"] == N and x["mode"] == mode)
            groups.setdefault((r["n_CSR"], r["gamma"]), []).append(N)
        for members in groups.values():
            vals = [p[N] for N in sorted(members)]
            mono &= all(a <= b for a, b in zip(vals, vals[1:]))
    ok = above and small and mono
    inc = max(pm[N] - ps[N] for N in ns)
    verdict(7, "multi-CSR collision overhead is non-negative, < 2 points, monotone in N", ok,
            f"max increase {100 * inc:.2f} pp; " +
            ", ".join(f"N={N}: {pm[N]:.4f}/{ps[N]:.4f}" for N in ns))
    assert ok


def test_c08_channel_utilization(verdict, light_rows):
    rows, _ = light_rows
    cm = {N: float(np.mean(_by(rows, N, "multi", "cu"))) for N in (50, 99, 150, 300, 450)}
    cs = {N: float(np.mean(_by(rows, N, "single", "cu"))) for N in (50, 99, 150, 300, 450)}
    higher = all(cm[N] > cs[N] for N in (50, 99, 150, 450))
    equal = cm[300] == cs[300]
    ok = higher and equal
    verdict(8, "multi-CSR uses more of the channel except where one CSR is planned", ok,
            ", ".join(f"N={N}: {cm[N]:.3f}/{cs[N]:.3f}" for N in cm))
    assert ok


def test_c09_structural_invariants(verdict):
    cases = [(4, 20, 15, 90), (3, 20, 11, 120), (2, 20, 6, 180), (1, 20, 1, 380),
             (2, 50, 7, 450), (1, 100, 1, 600)]
    total = 0
    counted = {}
    for n_csr, gamma, idx, N in cases:
        for seed in (1, 2):
            opt = grouping(idx)
            dur = 8.0
            cfg = ScenarioConfig(N=N, gen=HEAVY, sim_duration=dur, seed=seed)
            r = run_scenario(cfg, CsrPlan(n_csr, gamma), opt, trace=True)
            res = check_all(r, opt, int(dur * 1000))
            for k, v in res.items():
                counted[k] = counted.get(k, 0) + len(v)
                total += len(v)
    ok = total == 0
    verdict(9, "internal exclusion, priority service, FIFO, conservation hold on full traces",
            ok, ", ".join(f"{k}={v}" for k, v in counted.items()))
    assert ok


def test_c10_determinism(verdict, tmp_path):
    outs = []
    for d in ("a", "b"):
        spec = SweepSpec(N_values=[50, 150, 450], gen=HEAVY, mode="both", reps=2, duration=5.0,
                         out_dir=str(tmp_path / d))
        paths = run_sweep(spec)
        outs.append({k: open(p, "rb").read() for k, p in paths.items() if k != "config"})
    cfg = ScenarioConfig(N=60, gen=HEAVY, sim_duration=5.0, seed=77)
    traces = [format_trace(run_scenario(cfg, CsrPlan(2, 20), grouping(8), trace=True).trace)
              for _ in range(2)]
    ok = outs[0] == outs[1] and traces[0] == traces[1]
    verdict(10, "identical config and seed give byte-identical CSV output", ok,
            f"{len(outs[0])} files and one trace compared")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
