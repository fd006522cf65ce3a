"""CSV and SVG output for simulation campaigns.

Floats are written in shortest round-trip form (``repr``), so equal runs give
byte-identical files.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .offline import DesignArtifacts
from .sim import BoundRow, McSummary

SUMMARY_COLUMNS = ("controller", "x0", "episodes", "seed", "horizon", "n_sim", "failures",
                   "J_mean", "J_std")
BOUNDS_COLUMNS = ("ell", "p_x", "p_u", "f_x", "f_u")
HISTOGRAM_COLUMNS = ("bin_left", "bin_right", "count")
COMPARE_COLUMNS = ("episode", "J_ms", "J_is", "ratio")
FREQUENCY_COLUMNS = ("k", "f_x", "f_u", "f_x_poly", "f_u_poly", "mean_gamma_x", "mean_gamma_u")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def trajectory_columns(n: int, m: int) -> tuple:
    return (("episode", "k") + tuple(f"x{i + 1}" for i in range(n))
            + tuple(f"u{j + 1}" for j in range(m)) + ("gamma_x", "gamma_u", "mode", "stage_cost"))


def _writer(path: Path, header):
    fh = open(path, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    return fh, w


def write_trajectories(path, summary: McSummary, n: int, m: int) -> Path:
    """One row per episode and step; the final state row has empty input fields."""
    path = Path(path)
    fh, w = _writer(path, trajectory_columns(n, m))
    with fh:
        for tr in summary.traces:
            idx = int(tr.stream_id)
            for k in range(tr.horizon + 1):
                row = [idx, k] + [fmt(v) for v in tr.x[k]]
                if k < tr.horizon:
                    row += [fmt(v) for v in tr.u[k]]
                    row += [fmt(tr.gamma_x[k]), fmt(tr.gamma_u[k]), tr.mode[k],
                            fmt(tr.stage_cost[k])]
                else:
                    row += [""] * (m + 4)
                w.writerow(row)
    return path


def write_summary(path, summaries) -> Path:
    path = Path(path)
    fh, w = _writer(path, SUMMARY_COLUMNS)
    with fh:
        for s in summaries:
            w.writerow([s.controller, " ".join(fmt(v) for v in s.x0), s.episodes, s.seed,
                        s.horizon, s.n_sim, s.failures, fmt(s.J_mean), fmt(s.J_std)])
    return path


def write_bounds(path, rows: list[BoundRow]) -> Path:
    path = Path(path)
    fh, w = _writer(path, BOUNDS_COLUMNS)
    with fh:
        for r in rows:
            w.writerow([r.ell, fmt(r.p_x), fmt(r.p_u), fmt(r.f_x), fmt(r.f_u)])
    return path


def write_histogram(path, summary: McSummary) -> Path:
    path = Path(path)
    fh, w = _writer(path, HISTOGRAM_COLUMNS)
    e, c = summary.hist_edges, summary.hist_counts
    with fh:
        for i in range(len(c)):
            w.writerow([fmt(e[i]), fmt(e[i + 1]), int(c[i])])
    return path


def write_frequencies(path, summary: McSummary) -> Path:
    """Per-step satisfaction frequencies (ellipsoids, then polytopes) and mean relaxations.

    Input columns are empty at ``k = horizon``, which has a state but no input.
    """
    path = Path(path)
    fh, w = _writer(path, FREQUENCY_COLUMNS)
    n = max(summary.n_sim, 1)
    H = summary.horizon
    with fh:
        for k in range(H + 1):
            row = [k, fmt(summary.inside_x[k] / n)]
            row += [fmt(summary.inside_u[k] / n)] if k < H else [""]
            row += [fmt(summary.inside_x_poly[k] / n)]
            if k < H:
                row += [fmt(summary.inside_u_poly[k] / n), fmt(summary.mean_gamma_x[k]),
                        fmt(summary.mean_gamma_u[k])]
            else:
                row += ["", "", ""]
            w.writerow(row)
    return path


def write_compare(path, ms: McSummary, is_: McSummary) -> tuple[Path, float]:
    """Paired per-episode costs; returns the path and the mean ratio over paired episodes."""
    path = Path(path)
    fh, w = _writer(path, COMPARE_COLUMNS)
    ratios = []
    with fh:
        for i in range(ms.episodes):
            a, b = ms.J[i], is_.J[i]
            r = a / b if math.isfinite(a) and math.isfinite(b) and b != 0.0 else math.nan
            if math.isfinite(r):
                ratios.append(r)
            w.writerow([i, fmt(a), fmt(b), fmt(r)])
    return path, (float(np.mean(ratios)) if ratios else math.nan)


def write_svg(path, summary: McSummary, art: DesignArtifacts, max_traces: int = 50) -> Path:
    """Cost histogram and state trajectories with the ellipsoidal constraint set."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": "mssmpc", "svg.fonttype": "none"}):
        fig, (ax_h, ax_t) = plt.subplots(1, 2, figsize=(10, 4))
        e, c = summary.hist_edges, summary.hist_counts
        ax_h.bar(e[:-1], c, width=np.diff(e), align="edge", color="0.6", edgecolor="0.2")
        ax_h.set_xlabel("J_MPC")
        ax_h.set_ylabel("episodes")
        ax_h.set_title(f"{summary.controller}: mean {summary.J_mean:.6g}")
        traces = summary.traces[:max_traces]
        if art.n >= 2:
            for tr in traces:
                ax_t.plot(tr.x[:, 0], tr.x[:, 1], lw=0.6, color="C0", alpha=0.5)
            if art.n == 2:
                th = np.linspace(0.0, 2.0 * np.pi, 200)
                L = np.linalg.cholesky(art.W_x)
                ring = art.r_x * (np.stack([np.cos(th), np.sin(th)], axis=1) @ L.T)
                ax_t.plot(ring[:, 0], ring[:, 1], color="C3", lw=1.0)
            ax_t.set_xlabel("x1")
            ax_t.set_ylabel("x2")
        else:
            for tr in traces:
                ax_t.plot(tr.x[:, 0], lw=0.6, color="C0", alpha=0.5)
            ax_t.set_xlabel("k")
            ax_t.set_ylabel("x1")
        ax_t.set_title("closed-loop states")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
