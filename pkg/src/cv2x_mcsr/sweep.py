"""Sweeps over vehicle count: multi-CSR plans against the single-CSR baseline."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np
import yaml

from .allocator import SimulationEvaluator, THRESHOLDS, allocate, grouping, n_max
from .model import (CsrPlan, GAMMA_VALUES, GenerationParams, PRIORITY_ORDER, ScenarioConfig,
                    Weights)
from .simulator import run_scenario

MODES = ("multi", "single", "both")
LETTERS = tuple(c.letter for c in PRIORITY_ORDER)


def fmt(x) -> str:
    """CSV cell: ints verbatim, floats with 6 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.6g}"
    return str(x)


def round6(x: float) -> float:
    return float(fmt(float(x)))


def _parse_n_values(v) -> tuple:
    if isinstance(v, dict):
        start, stop, step = int(v["start"]), int(v["stop"]), int(v.get("step", 1))
        return tuple(range(start, stop + 1, step))
    if isinstance(v, str):
        parts = [int(p) for p in v.split(":")]
        if len(parts) in (2, 3):
            step = parts[2] if len(parts) == 3 else 1
            return tuple(range(parts[0], parts[1] + 1, step))
        return (parts[0],)
    return tuple(int(x) for x in v)


@dataclass(frozen=True)
class SweepSpec:
    N_values: tuple
    gen: GenerationParams = field(default_factory=GenerationParams)
    weights: Weights = field(default_factory=Weights)
    mode: str = "both"
    out_dir: str = "results"
    seed: int = 1
    reps: int = 1
    duration: float = 100.0
    warmup: Optional[float] = None
    eval_seed: int = 12345
    figures: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "N_values", _parse_n_values(self.N_values))
        if not self.N_values:
            raise ValueError("N_values must not be empty")
        bad = [n for n in self.N_values if not 1 <= n <= THRESHOLDS[-1][0]]
        if bad:
            raise ValueError(f"N out of range: {bad[0]} (need 1 <= N <= {THRESHOLDS[-1][0]})")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def modes(self) -> tuple:
        return ("multi", "single") if self.mode == "both" else (self.mode,)

    def to_dict(self) -> dict:
        return {
            "N_values": list(self.N_values),
            "mode": self.mode,
            "seed": self.seed,
            "reps": self.reps,
            "duration": self.duration,
            "warmup": self.warmup,
            "eval_seed": self.eval_seed,
            "workers": self.workers,
            "gen": asdict(self.gen),
            "weights": asdict(self.weights),
            "output": {"dir": self.out_dir, "figures": self.figures},
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        out = d.pop("output", {}) or {}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
        if "gen" in d:
            d["gen"] = GenerationParams(**d["gen"])
        if "weights" in d:
            d["weights"] = Weights(**d["weights"])
        if "dir" in out:
            d["out_dir"] = out["dir"]
        if "figures" in out:
            d["figures"] = bool(out["figures"])
        return cls(**d)

    @classmethod
    def from_yaml(cls, text: str) -> "SweepSpec":
        return cls.from_dict(yaml.safe_load(text) or {})


def run_seed(base: int, N: int, rep: int) -> int:
    """Seed of one replication; independent of the mode so that modes are paired."""
    return int(np.random.SeedSequence([base, N, rep]).generate_state(1)[0])


def single_plan(N: int) -> CsrPlan:
    """Standard single-CSR configuration: the shortest window that fits ``N``."""
    for g in GAMMA_VALUES:
        if N <= n_max(1, g):
            return CsrPlan(1, g, 1)
    raise ValueError(f"N out of range: {N}")


def regime_of(N: int) -> str:
    lo = 0
    for bound, _, _ in THRESHOLDS:
        if N <= bound:
            return f"{lo}<N<={bound}"
        lo = bound
    raise ValueError(f"N out of range: {N}")


RUN_FIELDS = (["N", "mode", "rep", "seed", "n_CSR", "gamma", "n_G_star"]
              + [f"d_avg_{s}" for s in LETTERS]
              + ["p_col", "cu", "cu_tx"]
              + [f"drops_{s}" for s in LETTERS])
INT_FIELDS = {"N", "rep", "seed", "n_CSR", "gamma", "n_G_star"} | {f"drops_{s}" for s in LETTERS}
METRICS = [f"d_avg_{s}" for s in LETTERS] + ["p_col", "cu", "cu_tx"] + [f"drops_{s}" for s in LETTERS]


def row_from_report(N, mode, rep, seed, plan: CsrPlan, res) -> dict:
    row = {"N": N, "mode": mode, "rep": rep, "seed": seed, "n_CSR": plan.n_csr,
           "gamma": plan.gamma, "n_G_star": plan.n_g_star}
    for c in PRIORITY_ORDER:
        row[f"d_avg_{c.letter}"] = round6(res.d_avg[c] * 1000.0)
    row["p_col"] = round6(res.p_col)
    row["cu"] = round6(res.cu)
    row["cu_tx"] = round6(res.cu_tx)
    for c in PRIORITY_ORDER:
        row[f"drops_{c.letter}"] = int(res.drops[c])
    return row


def parse_row(rec: dict) -> dict:
    out = {}
    for k in RUN_FIELDS:
        v = rec[k]
        if k == "mode":
            out[k] = v
        elif k in INT_FIELDS:
            out[k] = int(v)
        else:
            out[k] = float(v)
    return out


def write_csv(path_or_buf, header: Sequence[str], rows: Sequence[dict]):
    own = isinstance(path_or_buf, (str, os.PathLike))
    f = open(path_or_buf, "w", encoding="utf-8", newline="") if own else path_or_buf
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(r[h]) for h in header])
    finally:
        if own:
            f.close()


def read_runs(path) -> list:
    with open(path, encoding="utf-8", newline="") as f:
        rd = csv.DictReader(f)
        if rd.fieldnames is None or list(rd.fieldnames) != RUN_FIELDS:
            raise ValueError(f"{path}: unexpected header {rd.fieldnames}")
        return [parse_row(r) for r in rd]


def _job(args):
    cfg, plan, key = args
    return key, run_scenario(cfg, plan, grouping(plan.n_g_star))


def plan_runs(spec: SweepSpec, evaluator=None) -> list:
    """Every (N, mode, rep) job in output order as ``(cfg, plan, key)``."""
    if "multi" in spec.modes() and evaluator is None:
        evaluator = SimulationEvaluator(seed=spec.eval_seed)
    jobs = []
    for N in spec.N_values:
        plans = {}
        if "multi" in spec.modes():
            plans["multi"] = allocate(N, spec.gen, spec.weights, evaluator)
        if "single" in spec.modes():
            plans["single"] = single_plan(N)
        for mode in spec.modes():
            for rep in range(spec.reps):
                seed = run_seed(spec.seed, N, rep)
                cfg = ScenarioConfig(N=N, gen=spec.gen, weights=spec.weights,
                                     sim_duration=spec.duration, warmup=spec.warmup, seed=seed)
                jobs.append((cfg, plans[mode], (N, mode, rep, seed)))
    return jobs


def run_sweep_rows(spec: SweepSpec, evaluator=None, progress=None) -> list:
    jobs = plan_runs(spec, evaluator)
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as ex:
            results = list(ex.map(_job, jobs))
    else:
        results = []
        for j in jobs:
            results.append(_job(j))
            if progress:
                progress(j[2])
    rows = []
    for (cfg, plan, _), ((N, mode, rep, seed), res) in zip(jobs, results):
        rows.append(row_from_report(N, mode, rep, seed, plan, res))
    return rows


def _mean_se(xs):
    xs = np.asarray(xs, dtype=float)
    if len(xs) == 0:
        return math.nan, math.nan
    if not np.all(np.isfinite(xs)):
        m = float(np.mean(xs)) if not np.any(np.isnan(xs)) else math.nan
        return m, math.nan
    m = float(xs.mean())
    se = float(xs.std(ddof=1) / math.sqrt(len(xs))) if len(xs) > 1 else math.nan
    return m, se


SUMMARY_FIELDS = (["N", "mode", "n_CSR", "gamma", "n_G_star", "reps"]
                  + [x for m in METRICS for x in (m, f"{m}_se")])


def summarize(rows: Sequence[dict]) -> list:
    """Mean and standard error per (N, mode), in first-seen order."""
    keys = []
    groups: dict = {}
    for r in rows:
        k = (r["N"], r["mode"])
        if k not in groups:
            keys.append(k)
            groups[k] = []
        groups[k].append(r)
    out = []
    for k in keys:
        g = groups[k]
        s = {"N": k[0], "mode": k[1], "n_CSR": g[0]["n_CSR"], "gamma": g[0]["gamma"],
             "n_G_star": g[0]["n_G_star"], "reps": len(g)}
        for m in METRICS:
            s[m], s[f"{m}_se"] = _mean_se([r[m] for r in g])
        out.append(s)
    return out


REDUCTION_FIELDS = ["regime", "n_CSR", "gamma", "N_values"] + list(LETTERS)


def reduction_table(rows: Sequence[dict]) -> list:
    """Per regime and stream, 100 (d_single - d_multi) / d_single over all rows.

    Regimes whose multi-CSR plan is a single CSR show ``-``.
    """
    by_regime: dict = {}
    order = []
    for r in rows:
        reg = regime_of(r["N"])
        if reg not in by_regime:
            order.append(reg)
            by_regime[reg] = {"multi": [], "single": []}
        by_regime[reg][r["mode"]].append(r)
    out = []
    for reg in order:
        multi, single = by_regime[reg]["multi"], by_regime[reg]["single"]
        if not multi or not single:
            continue
        ns = sorted({r["N"] for r in multi})
        line = {"regime": reg, "n_CSR": multi[0]["n_CSR"], "gamma": multi[0]["gamma"],
                "N_values": " ".join(str(n) for n in ns)}
        for s in LETTERS:
            if multi[0]["n_CSR"] == 1:
                line[s] = "-"
                continue
            dm = float(np.mean([r[f"d_avg_{s}"] for r in multi]))
            ds = float(np.mean([r[f"d_avg_{s}"] for r in single]))
            if not math.isfinite(ds) or ds == 0 or math.isnan(dm):
                line[s] = "nan"
            else:
                line[s] = f"{100.0 * (ds - dm) / ds:.2f}"
        out.append(line)
    return out


def run_sweep(spec: SweepSpec, evaluator=None, progress=None) -> dict:
    """Run every job and write the result files; returns ``{name: path}``."""
    os.makedirs(spec.out_dir, exist_ok=True)
    rows = run_sweep_rows(spec, evaluator, progress)
    paths = {"runs": os.path.join(spec.out_dir, "runs.csv"),
             "summary": os.path.join(spec.out_dir, "summary.csv"),
             "config": os.path.join(spec.out_dir, "sweep.yaml")}
    write_csv(paths["runs"], RUN_FIELDS, rows)
    write_csv(paths["summary"], SUMMARY_FIELDS, summarize(rows))
    if spec.mode == "both":
        paths["reduction"] = os.path.join(spec.out_dir, "reduction.csv")
        write_csv(paths["reduction"], REDUCTION_FIELDS, reduction_table(rows))
    with open(paths["config"], "w", encoding="utf-8") as f:
        f.write(spec.to_yaml())
    if spec.figures:
        from .report import render_figures

        paths.update(render_figures(rows, spec.out_dir))
    return paths


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    write_csv(buf, RUN_FIELDS, rows)
    return buf.getvalue()
