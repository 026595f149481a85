"""Aligned text tables and optional figures for plans and sweep results."""

from __future__ import annotations

import math
import os
from typing import Sequence

from .allocator import enumerate_groupings, n_max
from .model import GAMMA_VALUES, MAX_CSR, PRIORITY_ORDER

NO_DATA = "no data"
LETTERS = tuple(c.letter for c in PRIORITY_ORDER)


def text_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(h) for h in header]] + [[_cell(x) for x in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for k, r in enumerate(cells):
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _cell(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf"
        return f"{x:.4g}"
    return str(x)


def capacity_table(alloc_fraction: float = 0.8, S: int = 25) -> str:
    """n_CSR rows by gamma columns of the supported vehicle count."""
    header = ["n_CSR"] + [f"gamma={g}ms" for g in GAMMA_VALUES]
    rows = [[n] + [n_max(n, g, alloc_fraction, S) for g in GAMMA_VALUES]
            for n in range(1, MAX_CSR + 1)]
    return text_table(header, rows)


def groupings_table(n_csr=None) -> str:
    counts = [n_csr] if n_csr is not None else range(1, MAX_CSR + 1)
    rows = []
    for n in counts:
        for opt in enumerate_groupings(n):
            rows.append([n, opt.index] + [repr(g) for g in opt.groups]
                        + [""] * (MAX_CSR - opt.n_csr))
    header = ["n_CSR", "n_G"] + [f"CSR{j + 1}" for j in range(MAX_CSR)]
    if n_csr is not None:
        header = header[:2 + n_csr]
        rows = [r[:2 + n_csr] for r in rows]
    return text_table(header, rows)


def summary_table(summary: Sequence[dict]) -> str:
    if not summary:
        return NO_DATA + "\n"
    header = (["N", "mode", "n_CSR", "gamma", "n_G*"] + [f"d_{s}(ms)" for s in LETTERS]
              + ["p_col", "cu"])
    rows = []
    for s in summary:
        rows.append([s["N"], s["mode"], s["n_CSR"], s["gamma"], s["n_G_star"]]
                    + [s[f"d_avg_{x}"] for x in LETTERS] + [s["p_col"], s["cu"]])
    return text_table(header, rows)


def reduction_text(reduction: Sequence[dict]) -> str:
    if not reduction:
        return NO_DATA + "\n"
    header = ["regime", "n_CSR", "gamma", "N"] + [f"{s}(%)" for s in LETTERS]
    rows = [[r["regime"], r["n_CSR"], r["gamma"], r["N_values"]] + [r[s] for s in LETTERS]
            for r in reduction]
    return text_table(header, rows)


def sweep_report(rows: Sequence[dict]) -> str:
    from .sweep import reduction_table, summarize

    if not rows:
        return NO_DATA + "\n"
    out = ["Sweep summary (means over replications)", summary_table(summarize(rows))]
    red = reduction_table(rows)
    if red:
        out += ["Average delay reduction of multi-CSR vs single CSR", reduction_text(red)]
    return "\n".join(out)


STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}


def _figsize(scale=1.0):
    width = 6.0 * scale
    return width, width * (math.sqrt(5.0) - 1.0) / 2.0


def render_figures(rows: Sequence[dict], out_dir: str) -> dict:
    """Delay, collision and utilisation curves against N, one PNG each."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .sweep import summarize

    summ = summarize(rows)
    if not summ:
        return {}
    modes = [m for m in ("multi", "single") if any(s["mode"] == m for s in summ)]
    paths = {}
    with matplotlib.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_figsize())
        for m in modes:
            pts = [s for s in summ if s["mode"] == m]
            ns = [s["N"] for s in pts]
            for k, x in enumerate(LETTERS):
                ax.plot(ns, [s[f"d_avg_{x}"] for s in pts], marker="o", ms=3,
                        ls="-" if m == "multi" else "--", color=f"C{k}", label=f"{x} ({m})")
        ax.set_xlabel("number of vehicles N")
        ax.set_ylabel("average delay (ms)")
        ax.set_yscale("log")
        ax.legend(ncol=2)
        fig.tight_layout()
        paths["fig_delay"] = os.path.join(out_dir, "delay_vs_N.png")
        fig.savefig(paths["fig_delay"])
        plt.close(fig)

        for key, label, name in (("p_col", "collision probability", "pcol_vs_N.png"),
                                 ("cu", "channel utilization", "cu_vs_N.png")):
            fig, ax = plt.subplots(figsize=_figsize(0.8))
            for m in modes:
                pts = [s for s in summ if s["mode"] == m]
                ax.errorbar([s["N"] for s in pts], [s[key] for s in pts],
                            yerr=[0.0 if math.isnan(s[f"{key}_se"]) else s[f"{key}_se"]
                                  for s in pts],
                            marker="o", ms=3, capsize=2, ls="-" if m == "multi" else "--",
                            label=m)
            ax.set_xlabel("number of vehicles N")
            ax.set_ylabel(label)
            ax.legend()
            fig.tight_layout()
            p = os.path.join(out_dir, name)
            fig.savefig(p)
            plt.close(fig)
            paths["fig_" + key] = p
    return paths
