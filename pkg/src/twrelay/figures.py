"""Render experiment results to a PNG next to the CSV.

Only the SUM aggregate rows are plotted: one panel per beamformer, one
series per (scheme, estimator).  Closed-form values draw as lines, Monte
Carlo values as markers with two-sigma error bars, so agreement between the
two is visible at a glance.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_experiment", "render_csv"]

_AXIS_LABELS = {
    "N": "relay antennas",
    "K": "user pairs",
    "P_S_db": "per-user transmit power (dB)",
    "p_P_db": "pilot power (dB)",
}


def _collect_sum_series(rows):
    """Group SUM rows into {kind: {(scheme, estimator): (x, y, err)}}."""
    panels: dict = {}
    for row in rows:
        _, kind, scheme, _, sweep_value, link_id, est, value, stderr = row
        if str(link_id) != "SUM":
            continue
        series = panels.setdefault(str(kind), {}).setdefault(
            (str(scheme), str(est)), ([], [], [])
        )
        series[0].append(float(sweep_value))
        series[1].append(float(value))
        series[2].append(float(stderr))
    return panels


def render_experiment(rows, spec, path) -> None:
    """Plot the aggregate spectral efficiency for every series in ``rows``."""
    panels = _collect_sum_series(rows)
    if not panels:
        raise ValueError("no SUM rows to plot")
    kinds = sorted(panels)
    fig, axes = plt.subplots(
        1, len(kinds), figsize=(6.0 * len(kinds), 4.5), squeeze=False, sharey=True
    )
    for ax, kind in zip(axes[0], kinds):
        for (scheme, est), (xs, ys, errs) in sorted(panels[kind].items()):
            label = scheme if len({e for _, e in panels[kind]}) == 1 else f"{scheme} ({est})"
            if est == "mc":
                ax.errorbar(
                    xs,
                    ys,
                    yerr=[2 * e for e in errs],
                    fmt="o",
                    capsize=3,
                    markersize=4,
                    label=label,
                )
            else:
                ax.plot(xs, ys, marker=".", label=label)
        ax.set_title(kind)
        ax.set_xlabel(_AXIS_LABELS.get(spec.sweep_var, spec.sweep_var))
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
    axes[0][0].set_ylabel("sum spectral efficiency (bits/s/Hz)")
    fig.suptitle(spec.name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_csv(csv_path, png_path, spec) -> None:
    """Re-render a figure from an existing results file."""
    import csv as _csv

    with open(csv_path, "r", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if len(header) != 9:
        raise ValueError(f"unexpected column count in {csv_path}")
    render_experiment(rows, spec, png_path)
