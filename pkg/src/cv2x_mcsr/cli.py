"""Command-line front end.

Exit status: 0 on success, 1 when a run fails, 2 for invalid arguments or a
vehicle count beyond capacity.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, replace

import yaml

from .allocator import (CapacityExceeded, SimulationEvaluator, allocate, best_group, grouping,
                        n_max, select_resources)
from .model import CsrPlan, GenerationParams, ScenarioConfig, Weights
from .report import NO_DATA, capacity_table, groupings_table, render_figures, sweep_report
from .simulator import format_trace, run_scenario
from .sweep import (RUN_FIELDS, SweepSpec, read_runs, row_from_report, run_sweep, write_csv)

log = logging.getLogger("cv2x_mcsr")


class UsageError(Exception):
    pass


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}")
    except yaml.YAMLError as e:
        raise UsageError(f"bad config {path}: {e}")
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping")
    return data


def _gen(args, base: dict) -> GenerationParams:
    g = dict(base.get("gen") or {})
    for flag, key in (("lh", "lambda_H"), ("ld", "lambda_D"), ("lm", "lambda_M")):
        v = getattr(args, flag, None)
        if v is not None:
            g[key] = v
    if getattr(args, "tc", None) is not None:
        g["T_C"] = None if args.tc <= 0 else args.tc
    return GenerationParams(**g)


def _weights(base: dict) -> Weights:
    return Weights(**(base.get("weights") or {}))


def _add_traffic(p):
    p.add_argument("--lh", type=float, help="HPD event rate (events/s)")
    p.add_argument("--ld", type=float, help="DENM event rate (events/s)")
    p.add_argument("--lm", type=float, help="MHD event rate (events/s)")
    p.add_argument("--tc", type=float, help="CAM interval in s (0 disables CAM)")
    p.add_argument("--config", help="YAML file with gen/weights sections and sweep keys")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cv2x-mcsr",
                                 description="Multi-CSR allocation planner and SPS simulator.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("plan", help="choose n_CSR, gamma and grouping for N vehicles")
    p.add_argument("--n", type=int, required=True)
    _add_traffic(p)
    p.add_argument("--seed", type=int, default=12345, help="evaluator seed")

    p = sub.add_parser("simulate", help="run one scenario")
    p.add_argument("--n", type=int, required=True)
    _add_traffic(p)
    p.add_argument("--gamma", type=int, help="selection window in ms (default: planner)")
    p.add_argument("--ncsr", type=int, help="CSRs per vehicle (default: planner)")
    p.add_argument("--group", type=int, help="grouping index n_G (default: best grouping)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--duration", type=float, default=100.0, help="simulated time in s")
    p.add_argument("--warmup", type=float, help="discarded start-up time in s")
    p.add_argument("--out", help="write a one-row CSV here")
    p.add_argument("--trace", help="write the event trace here")

    p = sub.add_parser("sweep", help="sweep vehicle counts and write CSV results")
    p.add_argument("--n", help="N values: '50,150,300' or 'start:stop:step'")
    _add_traffic(p)
    p.add_argument("--mode", choices=("multi", "single", "both"))
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--warmup", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("report", help="render tables from a sweep directory")
    p.add_argument("--out", required=True, help="sweep output directory")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")

    p = sub.add_parser("capacity-table", help="supported vehicles per n_CSR and gamma")
    p.add_argument("--format", choices=("text", "csv"), default="text")

    p = sub.add_parser("groupings", help="list the stream grouping options")
    p.add_argument("--ncsr", type=int, choices=(1, 2, 3, 4))
    return ap


def cmd_plan(args) -> int:
    cfg = _load_config(args.config)
    gen = _gen(args, cfg)
    weights = _weights(cfg)
    plan = allocate(args.n, gen, weights, SimulationEvaluator(seed=args.seed))
    opt = grouping(plan.n_g_star)
    cap = n_max(plan.n_csr, plan.gamma)
    print(json.dumps({
        "N": args.n,
        "n_CSR": plan.n_csr,
        "gamma": plan.gamma,
        "n_G_star": plan.n_g_star,
        "groups": [g.label for g in opt.groups],
        "N_max": cap,
        "feasible": args.n <= cap,
    }, indent=2))
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    gen = _gen(args, cfg)
    weights = _weights(cfg)
    if args.ncsr is None and args.gamma is None:
        n_csr, gamma = select_resources(args.n)
    else:
        d_n, d_g = select_resources(args.n) if args.n >= 1 else (1, 20)
        n_csr = args.ncsr if args.ncsr is not None else d_n
        gamma = args.gamma if args.gamma is not None else d_g
    try:
        plan = CsrPlan(n_csr, gamma)
    except ValueError as e:
        raise UsageError(str(e))
    if args.n > n_max(n_csr, gamma):
        log.warning("N=%d exceeds N_max=%d for n_CSR=%d, gamma=%d ms",
                    args.n, n_max(n_csr, gamma), n_csr, gamma)
    if args.group is not None:
        opt = grouping(args.group)
        if opt.n_csr != n_csr:
            raise UsageError(f"grouping {args.group} needs {opt.n_csr} CSRs, not {n_csr}")
    else:
        opt = grouping(best_group(n_csr, gamma, gen, weights, SimulationEvaluator(), N=args.n))
    plan = replace(plan, n_g_star=opt.index)
    scen = ScenarioConfig(N=args.n, gen=gen, weights=weights, sim_duration=args.duration,
                          warmup=args.warmup, seed=args.seed)
    res = run_scenario(scen, plan, opt, trace=bool(args.trace))
    out = {"N": args.n, "n_CSR": n_csr, "gamma": gamma, "n_G": opt.index,
           "groups": [g.label for g in opt.groups], "seed": args.seed}
    out.update(res.as_dict())
    print(json.dumps(_finite(out), indent=2, default=_json_default))
    if args.out:
        write_csv(args.out, RUN_FIELDS, [row_from_report(args.n, "custom", 0, args.seed, plan, res)])
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as f:
            f.write(format_trace(res.trace))
    return 0


def _json_default(x):
    return str(x)


def _finite(obj):
    """JSON has no inf/nan; spell them as strings."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _sweep_spec(args) -> SweepSpec:
    cfg = _load_config(args.config)
    d = {k: v for k, v in cfg.items() if k not in ("gen", "weights")}
    d["gen"] = asdict(_gen(args, cfg))
    if "weights" in cfg:
        d["weights"] = cfg["weights"]
    out = dict(d.get("output") or {})
    if args.n is not None:
        d["N_values"] = [int(x) for x in args.n.split(",")] if "," in args.n else args.n
    for key in ("mode", "reps", "seed", "duration", "warmup", "workers"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    if args.out is not None:
        out["dir"] = args.out
    if args.figures:
        out["figures"] = True
    d["output"] = out
    if "N_values" not in d:
        raise UsageError("sweep needs N values (--n or N_values in the config)")
    return SweepSpec.from_dict(d)


def cmd_sweep(args) -> int:
    spec = _sweep_spec(args)
    paths = run_sweep(spec, progress=lambda k: log.info("done N=%d mode=%s rep=%d", *k[:3]))
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_report(args) -> int:
    path = os.path.join(args.out, "runs.csv")
    if not os.path.exists(path):
        print(NO_DATA)
        return 0
    rows = read_runs(path)
    print(sweep_report(rows), end="")
    if args.figures and rows:
        for name, p in render_figures(rows, args.out).items():
            print(f"{name}: {p}")
    return 0


def cmd_capacity(args) -> int:
    if args.format == "csv":
        from .model import GAMMA_VALUES, MAX_CSR

        rows = [{"n_CSR": n, **{f"gamma_{g}": n_max(n, g) for g in GAMMA_VALUES}}
                for n in range(1, MAX_CSR + 1)]
        write_csv(sys.stdout, ["n_CSR"] + [f"gamma_{g}" for g in GAMMA_VALUES], rows)
    else:
        print(capacity_table(), end="")
    return 0


def cmd_groupings(args) -> int:
    print(groupings_table(args.ncsr), end="")
    return 0


COMMANDS = {
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "capacity-table": cmd_capacity,
    "groupings": cmd_groupings,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except CapacityExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (UsageError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        print(f"error: run failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
