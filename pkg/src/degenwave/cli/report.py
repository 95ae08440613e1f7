"""Report stage: plot-data files plus rendered matplotlib figures.

Data files are two-column text with a header, consumable by any plotting
tool; figures are PNG renderings of the same series written next to them
under figures/.  PNG metadata is stripped so reruns stay byte-stable.
"""

from __future__ import annotations

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .pipeline import _csv_columns, _x0_tag, emit_plot_data

__all__ = ["render_report"]

_SAVEFIG = dict(dpi=110, metadata={"Software": None})


def render_report(runner):
    out = runner.out
    figdir = out / "figures"
    figdir.mkdir(exist_ok=True)
    cfg = runner.config
    outputs = []

    for kind in ("curve", "energy", "profile", "solitons"):
        try:
            outputs.extend(emit_plot_data(runner, kind))
        except Exception:
            continue

    # blow-up curve with classification markers
    curve_csv = out / "curve.csv"
    if curve_csv.exists():
        X, T = _csv_columns(curve_csv, "X", "T")
        kinds = _class_column(curve_csv)
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.plot(X, T, color="0.3", lw=1.0, label="T_U(X)")
        for kind, color in (("non_characteristic", "tab:blue"),
                            ("characteristic", "tab:red"),
                            ("undetermined", "0.7")):
            sel = kinds == kind
            if np.any(sel):
                ax.plot(X[sel], T[sel], ".", ms=3, color=color, label=kind)
        ax.set_xlabel("X")
        ax.set_ylabel("T_U(X)")
        ax.legend(loc="best", fontsize=8)
        ax.set_title("blow-up curve")
        fig.tight_layout()
        p = figdir / "curve.png"
        fig.savefig(p, **_SAVEFIG)
        plt.close(fig)
        outputs.append(p)

    # Lyapunov quantity H(s) per base point
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    drew = False
    for x0 in cfg.x0_list:
        src = out / f"energy_{_x0_tag(x0)}.csv"
        if not src.exists():
            continue
        s, H = _csv_columns(src, "s", "H")
        ax.plot(s, H, lw=1.2, label=f"x0={x0:g}")
        drew = True
    if drew:
        ax.set_xlabel("s")
        ax.set_ylabel("H(s)")
        ax.set_title("Lyapunov quantity along similarity time")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        p = figdir / "energy.png"
        fig.savefig(p, **_SAVEFIG)
        outputs.append(p)
    plt.close(fig)

    # profile-fit distance decay
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    drew = False
    for x0 in cfg.x0_list:
        src = out / f"profile_distance_{_x0_tag(x0)}.csv"
        if not src.exists():
            continue
        s, dist = _csv_columns(src, "s", "distance")
        ax.semilogy(s, np.maximum(dist, 1e-300), lw=1.2, label=f"x0={x0:g}")
        drew = True
    if drew:
        ax.set_xlabel("s")
        ax.set_ylabel("distance to fitted soliton")
        ax.set_title("profile convergence")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        p = figdir / "profile.png"
        fig.savefig(p, **_SAVEFIG)
        outputs.append(p)
    plt.close(fig)

    # soliton gaps against the logarithmic law
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    drew = False
    for k_str in cfg.raw["solitons"]["k_list"].split():
        src = out / f"soliton_gaps_k{k_str}.csv"
        if not src.exists():
            continue
        s, gap, gap_a = _csv_columns(src, "s", "gap_observed", "gap_ansatz")
        ax.semilogx(s, gap, lw=1.2, label=f"k={k_str} observed")
        ax.semilogx(s, gap_a, "--", lw=0.9, label=f"k={k_str} log law")
        drew = True
    if drew:
        ax.set_xlabel("s")
        ax.set_ylabel("min center gap")
        ax.set_title("soliton center separation")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        p = figdir / "solitons.png"
        fig.savefig(p, **_SAVEFIG)
        outputs.append(p)
    plt.close(fig)

    return outputs


def _class_column(path):
    kinds = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        i = header.index("class")
        for line in fh:
            kinds.append(line.rstrip("\n").split(",")[i])
    return np.array(kinds)
