"""Log-log convergence figures with reference-slope guides."""

import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .report import parse_report


@dataclass
class PlotJob:
    csv_paths: tuple
    out_path: str
    guides: tuple = ()        # reference slopes for dashed guide lines
    title: str = None


def _beta_label(beta):
    return f"\N{GREEK SMALL LETTER BETA}={beta:g}"


def build_figure(job):
    """Assemble the figure; split from render() so tests can inspect it.

    One error bar series per beta per file; with several input files the
    series are prefixed by the file stem.  Guides are dashed lines through
    the common step range, anchored a little below the data.
    """
    reports = [parse_report(p) for p in job.csv_paths]
    fig, ax = plt.subplots(figsize=(5.4, 4.1))
    multi = len(reports) > 1
    x_all, y_all = [], []
    for report in reports:
        stem = os.path.splitext(os.path.basename(report.path))[0]
        for beta in report.betas():
            dts, errs, ses = report.series(beta)
            label = _beta_label(beta)
            fitted = report.fitted_orders.get(beta)
            if fitted is not None:
                label += f" (fitted {fitted:.2f})"
            if multi:
                label = f"{stem}: {label}"
            ax.errorbar(dts, errs, yerr=ses, marker="o", markersize=3.5,
                        capsize=2.5, linewidth=1.2, label=label)
            x_all.extend(dts)
            y_all.extend(errs)

    xs = np.array([min(x_all), max(x_all)])
    anchor = 0.55 * min(y_all)
    for slope in job.guides:
        ys = anchor * (xs / xs[0]) ** slope
        ax.plot(xs, ys, "--", color="0.45", linewidth=1.0)
        ax.annotate(f"slope {slope:g}", (xs[1], ys[1]), fontsize=8,
                    color="0.35", textcoords="offset points", xytext=(4, -4))

    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("step size")
    ax.set_ylabel("RMS error at final time")
    if job.title:
        ax.set_title(job.title)
    ax.legend(fontsize=8, loc="upper left")
    fig.tight_layout()
    return fig


def render(job):
    """Render the job to its output path (the format follows the suffix)."""
    fig = build_figure(job)
    try:
        fig.savefig(job.out_path, dpi=160)
    finally:
        plt.close(fig)
    return job.out_path
