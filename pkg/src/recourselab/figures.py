"""Matplotlib report figures rendered alongside the delimited output.

All figures go through ``_save`` which strips encoder metadata so repeated
runs produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import pyplot as plt
from matplotlib.colors import LinearSegmentedColormap

DIVERGING = LinearSegmentedColormap.from_list(
    "blue_gray_red", [(0.0, 0.0, 1.0), (0.5, 0.5, 0.5), (1.0, 0.0, 0.0)])


def _save(fig, path):
    fig.savefig(str(path), dpi=110, metadata={"Software": None})
    plt.close(fig)


def scan1d_figure(lro, cert, built, path, span=None):
    """L/R/O bands, the verdict, and the constructed phi when one exists."""
    endpoints = (lro.L.finite_endpoints() + lro.R.finite_endpoints()
                 + lro.O.finite_endpoints())
    if span is None:
        if endpoints:
            lo, hi = min(endpoints) - 1.0, max(endpoints) + 1.0
        else:
            lo, hi = -2.0, 2.0
    else:
        lo, hi = span
    xs = np.linspace(lo, hi, 1201)

    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7.0, 4.4), sharex=True,
                                   gridspec_kw={"height_ratios": [1, 2]})
    bands = (("L", lro.L, "tab:cyan", 2.0), ("R", lro.R, "tab:red", 1.0),
             ("O", lro.O, "tab:gray", 0.0))
    for name, s, color, y in bands:
        for p in s.parts:
            a = max(p.lo, lo - 1.0)
            b = min(p.hi, hi + 1.0)
            ax0.plot([a, b], [y, y], lw=6, color=color, solid_capstyle="butt")
        ax0.text(lo, y + 0.28, name, fontsize=9)
    ax0.set_ylim(-0.7, 2.9)
    ax0.set_yticks([])
    ax0.set_title(f"verdict: {cert.verdict} ({cert.mode} mode)")

    if built is not None:
        ax1.plot(xs, built.phi_batch(xs), color="black", lw=1.2)
        ax1.set_ylabel("constructed phi")
    else:
        w = cert.witness
        ax1.axhline(0.0, color="black", lw=0.8)
        for p, color in ((w.left_interval, "tab:cyan"), (w.right_interval, "tab:red")):
            a, b = max(p.lo, lo - 1.0), min(p.hi, hi + 1.0)
            ax1.plot([a, b], [0, 0], lw=10, color=color, alpha=0.45, solid_capstyle="butt")
        ax1.plot([w.shared_point], [0.0], "kx", ms=10)
        ax1.annotate("forced overlap", (w.shared_point, 0.0), xytext=(0, 18),
                     textcoords="offset points", ha="center", fontsize=9)
        ax1.set_ylim(-1, 1)
        ax1.set_yticks([])
    ax1.set_xlabel("x")
    ax1.set_xlim(lo, hi)
    fig.tight_layout()
    _save(fig, path)


def battery_figure(report, path):
    """Pass/fail bars for every battery claim."""
    names = [c.name for c in report.claims]
    ok = [c.passed for c in report.claims]
    fig, ax = plt.subplots(figsize=(7.0, 0.5 * len(names) + 1.2))
    ax.barh(range(len(names)), [1] * len(names),
            color=["tab:green" if p else "tab:red" for p in ok])
    ax.set_yticks(range(len(names)), names, fontsize=9)
    ax.set_xticks([])
    ax.invert_yaxis()
    ax.set_title("counterexample battery: "
                 + ("all claims pass" if report.all_passed else "FAILURES present"))
    fig.tight_layout()
    _save(fig, path)


def profpic_montage(rows, methods, path):
    """Fig-4-style montage: original image plus one saliency column per method.

    ``rows`` is a list of dicts with keys "title", "image" (2D array) and
    "maps" (method name -> weight vector).
    """
    n_rows = len(rows)
    n_cols = 1 + len(methods)
    fig, axes = plt.subplots(n_rows, n_cols,
                             figsize=(1.9 * n_cols, 2.0 * n_rows), squeeze=False)
    for r, row in enumerate(rows):
        img = row["image"]
        axes[r][0].imshow(img, cmap="gray", vmin=0, vmax=255)
        axes[r][0].set_ylabel(row["title"], fontsize=8)
        if r == 0:
            axes[r][0].set_title("original", fontsize=9)
        for c, method in enumerate(methods, start=1):
            w = np.asarray(row["maps"][method], dtype=float).reshape(img.shape)
            vmax = float(np.max(np.abs(w))) or 1.0
            axes[r][c].imshow(w, cmap=DIVERGING, vmin=-vmax, vmax=vmax)
            if r == 0:
                axes[r][c].set_title(method, fontsize=9)
    for ax_row in axes:
        for ax in ax_row:
            ax.set_xticks([])
            ax.set_yticks([])
    fig.tight_layout()
    _save(fig, path)


def probe_figure(report, path):
    """Jump magnitudes found by the continuity probe."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if report.jumps:
        mags = [j.magnitude for j in report.jumps]
        stable = [j.discontinuity_candidate for j in report.jumps]
        ax.bar(range(len(mags)), mags,
               color=["tab:red" if s else "tab:orange" for s in stable])
        ax.set_ylabel("jump magnitude")
        ax.set_xlabel("flagged pair (red: stable under halving)", fontsize=9)
    else:
        ax.text(0.5, 0.5, "no jumps above threshold", ha="center", va="center")
        ax.set_xticks([])
        ax.set_yticks([])
    ax.axhline(report.jump_threshold, color="black", lw=0.8, ls="--")
    ax.set_title(f"continuity probe (pair step {report.pair_step})", fontsize=10)
    fig.tight_layout()
    _save(fig, path)
