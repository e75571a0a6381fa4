"""Plot-data tables and figures from one or more experiment directories.

Every figure is redrawable from the CSV written next to it.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import DataError
from .experiment import read_csv, write_csv
from .metrics import METRICS, SIGNATURES, empirical_cdf

BOX_STATS = ("min", "q25", "median", "q75", "max")
BOX_METRICS = ("bias", "nse", "flv", "fhv", "corr", "kge")
CDF_METRICS = ("nse", "bias", "fhv", "flv")


def _scheme_label(run: Path) -> str:
    cfg = run / "config.json"
    if not cfg.exists():
        raise DataError(f"missing artifact {cfg}")
    return json.loads(cfg.read_text())["scheme"]


def load_metrics(run) -> tuple[str, list[str], dict[str, np.ndarray]]:
    """``(scheme, basin_ids, {column: values})`` from a run's metrics.csv."""
    run = Path(run)
    label = _scheme_label(run)
    header, rows = read_csv(run / "metrics.csv")
    ids = [r[0] for r in rows]
    cols = {}
    for j, name in enumerate(header[1:], start=1):
        if name == "undefined":
            continue
        cols[name] = np.array([float(r[j]) for r in rows])
    return label, ids, cols


def box_quantiles(values) -> dict[str, float]:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {k: math.nan for k in BOX_STATS}
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return dict(zip(BOX_STATS, q))


def _safe(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label).strip("_")


def build_tables(runs, out) -> dict[str, list[Path]]:
    """Write boxplot, CDF and scatter tables under ``out``; returns written paths."""
    out = Path(out)
    loaded = [load_metrics(r) for r in runs]
    if not loaded:
        raise DataError("report needs at least one experiment directory")
    written = {"boxplot": [], "cdf": [], "scatter": []}

    rows = []
    for label, _, cols in loaded:
        for m in BOX_METRICS:
            v = cols[m]
            q = box_quantiles(v)
            n_def = int(np.isfinite(v).sum())
            rows.append([label, m, *[q[k] for k in BOX_STATS], str(n_def), str(v.size - n_def)])
    p = out / "boxplot.csv"
    write_csv(p, ["scheme", "metric", *BOX_STATS, "n_defined", "n_undefined"], rows)
    written["boxplot"].append(p)

    for m in CDF_METRICS:
        rows = []
        for label, _, cols in loaded:
            for value, frac in empirical_cdf(cols[m]):
                rows.append([label, value, frac])
        p = out / f"cdf_{m}.csv"
        write_csv(p, ["scheme", "value", "fraction"], rows)
        written["cdf"].append(p)

    for label, ids, cols in loaded:
        rows = [[bid, cols["nse"][i], *[cols[s][i] for s in SIGNATURES]] for i, bid in enumerate(ids)]
        p = out / f"scatter_{_safe(label)}.csv"
        write_csv(p, ["basin_id", "nse", *SIGNATURES], rows)
        written["scatter"].append(p)
    return written


# --- figures ----------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update({
        "font.size": 9, "axes.titlesize": 9, "axes.labelsize": 9,
        "axes.spines.top": False, "axes.spines.right": False,
        "savefig.dpi": 150, "savefig.bbox": "tight",
    })
    return plt


def _read_long(path, key_col=0):
    header, rows = read_csv(path)
    groups: dict[str, list[list[float]]] = {}
    for r in rows:
        groups.setdefault(r[key_col], []).append([float(x) for x in r[key_col + 1 :]])
    return header, {k: np.array(v) for k, v in groups.items()}


def plot_boxplot(table: Path, png: Path) -> Path:
    """Box panels per metric drawn from precomputed quantiles."""
    plt = _pyplot()
    header, rows = read_csv(table)
    schemes = list(dict.fromkeys(r[0] for r in rows))
    fig, axes = plt.subplots(2, 3, figsize=(9, 5))
    for ax, m in zip(axes.ravel(), BOX_METRICS):
        stats = []
        for s in schemes:
            r = next(r for r in rows if r[0] == s and r[1] == m)
            q = [float(x) for x in r[2:7]]
            stats.append({"label": s, "whislo": q[0], "q1": q[1], "med": q[2],
                          "q3": q[3], "whishi": q[4], "fliers": []})
        ax.bxp(stats, showfliers=False)
        ax.set_title(m.upper() if m != "bias" else "Bias (%)")
        ax.tick_params(axis="x", labelrotation=45)
        if m == "nse":
            ax.set_ylim(max(ax.get_ylim()[0], -1.0), 1.0)
    fig.tight_layout()
    fig.savefig(png)
    plt.close(fig)
    return png


def plot_cdf(tables: list[Path], png: Path) -> Path:
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(tables), figsize=(3 * len(tables), 3), squeeze=False)
    for ax, path in zip(axes[0], tables):
        _, groups = _read_long(path)
        for s, v in groups.items():
            if v.size:
                ax.step(v[:, 0], v[:, 1], where="post", label=s, lw=1)
        ax.set_xlabel(path.stem.removeprefix("cdf_"))
        ax.set_ylabel("fraction of basins")
        ax.set_ylim(0, 1)
    axes[0][0].legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(png)
    plt.close(fig)
    return png


def plot_scatter(table: Path, png: Path) -> Path:
    plt = _pyplot()
    header, rows = read_csv(table)
    data = np.array([[float(x) for x in r[1:]] for r in rows]).reshape(-1, len(header) - 1)
    fig, axes = plt.subplots(1, len(SIGNATURES), figsize=(3 * len(SIGNATURES), 3))
    for j, (ax, s) in enumerate(zip(axes, SIGNATURES)):
        x, y = data[:, j + 1], data[:, 0]
        ok = np.isfinite(x) & np.isfinite(y)
        ax.scatter(x[ok], y[ok], s=8)
        ax.set_xlabel(s)
        ax.set_ylabel("NSE")
    fig.tight_layout()
    fig.savefig(png)
    plt.close(fig)
    return png


def report(runs, out) -> dict[str, list[Path]]:
    """Tables plus PNG figures for the given experiment directories."""
    out = Path(out)
    written = build_tables(runs, out)
    figs = [plot_boxplot(written["boxplot"][0], out / "boxplot.png"),
            plot_cdf(written["cdf"], out / "cdf.png")]
    figs += [plot_scatter(p, p.with_suffix(".png")) for p in written["scatter"]]
    written["figures"] = figs
    return written
