"""Minimal SVG figures: observed vs predicted clouds and the Little's-law scatter."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLORS = {"observations": "black", "knn": "tab:gray", "gaussian": "tab:blue", "flow": "tab:orange"}


def _svg(fig) -> str:
    buf = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": "perftwin", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return buf.getvalue()


def clouds_svg(test, predictions, models, max_loads: int = 6) -> str:
    groups = list(test)[:max_loads]
    fig, axes = plt.subplots(1, max(len(groups), 1), figsize=(3.2 * max(len(groups), 1), 3.2), squeeze=False)
    for ax, g in zip(axes[0], groups):
        ax.scatter(g.points[:, 0], g.points[:, 1], s=4, c=COLORS["observations"], label="observations")
        for m in models:
            p = predictions[m][g.key]
            ax.scatter(p[:, 0], p[:, 1], s=4, alpha=0.5, c=COLORS.get(m, None), label=m)
        ax.set_title(f"{g.load_id} {g.spec.io_type}", fontsize=8)
        ax.set_xlabel("IOPS")
        ax.set_ylabel("latency")
    axes[0][0].legend(fontsize=6)
    fig.tight_layout()
    return _svg(fig)


def little_svg(records_by_source) -> str:
    fig, ax = plt.subplots(figsize=(4, 4))
    hi = 1.0
    for source, recs in records_by_source.items():
        if not recs:
            continue
        lhs = [r.lhs for r in recs]
        rhs = [r.rhs for r in recs]
        hi = max(hi, max(lhs), max(rhs))
        ax.scatter(lhs, rhs, s=6, c=COLORS.get(source, None), label=source, alpha=0.7)
    ax.plot([0, hi], [0, hi], lw=0.8, c="red")
    ax.set_xlabel("Q x J")
    ax.set_ylabel("sum IOPS x latency")
    ax.legend(fontsize=6)
    fig.tight_layout()
    return _svg(fig)
