"""Deterministic CSV/JSON artifact writers and SVG report rendering."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import MissingArtifact

matplotlib.rcParams["svg.hashsalt"] = "waveguide-lab"

_SVG_META = {"Date": None}


def fmt(v) -> str:
    """17-significant-digit float formatting shared by all delimited output."""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_svg(fig, path) -> None:
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

def plot_ratio_vs_eps(per_z: dict, n: int, path, title="resolvent ratio") -> None:
    """Log-log ratio vs eps per lambda, with the theorem bound drawn."""
    fig, ax = plt.subplots(figsize=(6, 4.2))
    lams = sorted({k[0] for k in per_z})
    for lam in lams:
        eps = sorted({k[1] for k in per_z if k[0] == lam}, reverse=True)
        vals = [per_z[(lam, e)] for e in eps]
        ax.loglog(eps, vals, "o-", lw=0.8, ms=2.5, alpha=0.7)
    bound = 5000.0 * n ** 2
    ax.axhline(bound, color="k", ls="--", lw=1.2,
               label=f"uniform bound 5000 n^2 = {bound:g}")
    ax.set_xlabel("eps")
    ax.set_ylabel("ratio")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    save_svg(fig, path)


def plot_trend_pair(per_z_a: dict, per_z_b: dict, labels, path) -> None:
    """Side-by-side eps-trend comparison for two sweeps."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    for ax, per_z, lab in zip(axes, (per_z_a, per_z_b), labels):
        lams = sorted({k[0] for k in per_z})
        for lam in lams:
            eps = sorted({k[1] for k in per_z if k[0] == lam}, reverse=True)
            ax.loglog(eps, [per_z[(lam, e)] for e in eps], "o-", lw=0.8, ms=2.5)
        ax.set_xlabel("eps")
        ax.set_title(lab)
    axes[0].set_ylabel("ratio")
    fig.tight_layout()
    save_svg(fig, path)


def plot_decay(times, sup, fit, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(times, sup, "o", ms=3, label="sup norm")
    lo, hi = fit.t_range
    import numpy as np
    ts = np.geomspace(max(lo, times[times > 0].min()), hi, 50)
    ax.loglog(ts, np.exp(fit.intercept) * ts ** fit.slope, "-",
              label=f"fit slope {fit.slope:.3f}")
    ax.set_xlabel("t")
    ax.set_ylabel("sup |u|")
    ax.legend()
    fig.tight_layout()
    save_svg(fig, path)


def plot_trace(times, series: dict, path, ylabel="accumulator") -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name, vals in series.items():
        ax.plot(times, vals, label=name, lw=1.1)
    ax.set_xlabel("T")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    save_svg(fig, path)


def plot_margins(rows, path) -> None:
    """Smallest relative margin per inequality id."""
    worst = {}
    for ineq, _trial, _lhs, rhs, margin, _params in rows:
        if rhs:
            rel = margin / rhs
            worst[ineq] = min(worst.get(ineq, np.inf), rel)
    fig, ax = plt.subplots(figsize=(6.5, 3.6))
    names = sorted(worst)
    ax.bar(range(len(names)), [worst[n] for n in names])
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("min margin / rhs")
    ax.axhline(0.0, color="k", lw=0.8)
    fig.tight_layout()
    save_svg(fig, path)


def plot_spectrum(records, threshold: float, window, path,
                  sector_threshold: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.axhspan(threshold, window[1], color="0.85",
               label="essential spectrum")
    if sector_threshold is not None:
        ax.axhline(sector_threshold, color="tab:orange", ls=":",
                   label="sector threshold")
    for r in records:
        color = "tab:red" if r.embedded else "tab:blue"
        ax.hlines(r.value, 0.2, 0.8, color=color, lw=2)
    ax.set_xlim(0, 1)
    ax.set_ylim(window[0], window[1])
    ax.set_xticks([])
    ax.set_ylabel("energy")
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    save_svg(fig, path)


def plot_wall(profile, extent, path) -> None:
    import numpy as np
    fig, ax = plt.subplots(figsize=(6, 3))
    r = np.linspace(0, extent, 400)
    s = profile.scale(r)
    ax.plot(r, s, lw=1.3)
    ax.set_xlabel("|x|")
    ax.set_ylabel("wall scale")
    fig.tight_layout()
    save_svg(fig, path)


# ---------------------------------------------------------------------------
# cross-bundle report
# ---------------------------------------------------------------------------

THEOREM_KEYS = (
    ("resolvent_uniform", "Thm 2.1 uniform resolvent bound"),
    ("resolvent_trend", "Thm 2.1 eps-uniformity trend"),
    ("smoothing_schrodinger", "Thm 3.2-3.4 Schrodinger smoothing"),
    ("smoothing_wave", "Thm 3.5 wave/Klein-Gordon smoothing"),
    ("strichartz", "Thm 4.1 endpoint Strichartz"),
    ("dispersive_decay", "Example 1.1 flat dispersive decay"),
    ("embedded_eigenvalue", "Remark 1.3 embedded eigenvalue"),
    ("absence", "Absence-of-eigenvalues corollary"),
    ("repulsive", "Def 1.2 repulsivity audit"),
    ("norm_suite", "Sec 2 norm inequality family"),
)


def render_report(bundle_dirs, out_dir) -> Path:
    """Combine bundles into a verdict table plus comparison plots."""
    bundle_dirs = [Path(b) for b in bundle_dirs]
    if not bundle_dirs:
        raise MissingArtifact("no bundles given")
    verdicts = {}
    sweeps = []
    for bdir in bundle_dirs:
        vf = bdir / "verdicts.json"
        if not vf.exists():
            raise MissingArtifact(f"{bdir} has no verdicts.json")
        data = json.loads(vf.read_text())
        label = data.get("label") or bdir.name
        for key, val in data.get("verdicts", {}).items():
            verdicts[f"{label}:{key}"] = val
        pz = bdir / "per_z.json"
        if pz.exists():
            raw = json.loads(pz.read_text())
            sweeps.append((label, {(float(a), float(b)): v
                                   for a, b, v in raw}))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["waveguide lab verdict summary", "=" * 34]
    for key, desc in THEOREM_KEYS:
        hits = {k: v for k, v in verdicts.items() if k.endswith(":" + key)}
        for k, v in sorted(hits.items()):
            status = "PASS" if v.get("passed") else "FAIL"
            lines.append(f"{status:4s}  {desc:45s} {k.split(':')[0]:22s} "
                         f"value={fmt(v.get('value', ''))}")
    extra = {k: v for k, v in sorted(verdicts.items())
             if not any(k.endswith(":" + key) for key, _ in THEOREM_KEYS)}
    for k, v in extra.items():
        status = "PASS" if v.get("passed") else "FAIL"
        lines.append(f"{status:4s}  {'(other)':45s} {k:30s} "
                     f"value={fmt(v.get('value', ''))}")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    if len(sweeps) >= 2:
        plot_trend_pair(sweeps[0][1], sweeps[1][1],
                        (sweeps[0][0], sweeps[1][0]),
                        out_dir / "trend_comparison.svg")
    return out_dir
