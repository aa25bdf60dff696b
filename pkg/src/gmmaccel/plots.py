"""Static SVG convergence plots for exported traces."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .em import FitTrace, SolutionChoice  # noqa: E402


def render_convergence_svg(traces, path, log_x: bool = False, title: str | None = None):
    """Plot objective vs. iteration for several labelled traces.

    ``traces`` is a sequence of (label, FitTrace) pairs.  Iterations where
    components were killed are marked with dots; the axis switches to a log
    iteration scale with ``log_x``.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for label, trace in traces:
        iters = [r.iteration for r in trace.records]
        values = [r.objective for r in trace.records]
        (line,) = ax.plot(iters, values, label=label, linewidth=1.4)
        kill_pts = [(r.iteration, r.objective) for r in trace.records if r.kills > 0]
        if kill_pts:
            ax.scatter(*zip(*kill_pts), color=line.get_color(), s=28, zorder=3,
                       edgecolors="black", linewidths=0.5)
        final = [
            (r.iteration, r.objective)
            for r in trace.records
            if r.choice is SolutionChoice.FINAL_CONSERVATIVE_EM
        ]
        if final:
            ax.scatter(*zip(*final), color=line.get_color(), s=20, marker="s",
                       zorder=3)
    if log_x:
        ax.set_xscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize=9)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
