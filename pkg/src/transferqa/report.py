"""Optional figure rendering for the report paths.

The canonical outputs stay delimited (CSV / JSON); these helpers render a
matplotlib figure next to them when a plot path is requested. matplotlib is
imported lazily and forced onto the Agg backend so the CLI works headless.
"""

from __future__ import annotations

from pathlib import Path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_sweep_curve(rows: list[dict], path: str | Path) -> None:
    """Plot JGA and SGA against alpha from sweep rows."""
    plt = _pyplot()
    alphas = [row["alpha"] for row in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(alphas, [row["jga"] for row in rows], marker="o", label="JGA")
    ax.plot(alphas, [row["sga"] for row in rows], marker="s", label="SGA")
    ax.set_xlabel("unanswerable ratio alpha")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_metrics_summary(report_dict: dict, path: str | Path) -> None:
    """Bar chart of the headline metrics plus per-domain JGA."""
    plt = _pyplot()
    labels = ["JGA", "AGA", "SGA"]
    values = [report_dict["jga"], report_dict["aga"], report_dict["sga"]]
    for domain, score in sorted(report_dict.get("per_domain_jga", {}).items()):
        labels.append(f"JGA:{domain}")
        values.append(score)
    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(labels)), 4))
    ax.bar(range(len(values)), values, color="#4878cf")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("accuracy")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
