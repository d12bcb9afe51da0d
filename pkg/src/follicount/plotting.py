"""Matplotlib figures written next to the delimited reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from follicount.overlay import Stage, render_overlay  # noqa: E402
from follicount.settings import Magnification  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 7.0

params = {
    "font.size": 8,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "lines.linewidth": 1,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "svg.hashsalt": "follicount",
}

CON_COLOR = "#2b8cbe"
LIB_COLOR = "#a8ddb5"
HUMAN_COLOR = "#e34a33"

# Fixed metadata keeps repeated runs byte-identical.
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, format="png", metadata=_META)
    plt.close(fig)


def _bar_axes(n):
    width = min(max(fig_width, 0.18 * n + 1.5), 24)
    return plt.subplots(figsize=(width, fig_width * golden_mean * 0.8))


def counts_figure(rows, path, title="Automated counts"):
    """Conservative-to-liberal range and mean per image."""
    with plt.rc_context(params):
        rows = [r for r in rows if r.count is not None]
        fig, ax = _bar_axes(len(rows))
        x = np.arange(len(rows))
        con = np.array([r.count.con for r in rows], dtype=float)
        lib = np.array([r.count.lib for r in rows], dtype=float)
        ax.bar(x, lib, color=LIB_COLOR, label="liberal")
        ax.bar(x, con, color=CON_COLOR, label="conservative")
        ax.plot(x, (con + lib) / 2, "k_", markersize=8, label="mean")
        ax.set_xticks(x)
        ax.set_xticklabels([r.imageId for r in rows], rotation=90)
        ax.set_ylabel("follicles per image")
        ax.set_title(title)
        ax.legend(loc="upper right", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def comparison_figure(report, path):
    """Automated versus human counts, per image and in total."""
    with plt.rc_context(params):
        rows = report.rows
        fig, (ax, axt) = plt.subplots(
            1, 2, figsize=(fig_width, fig_width * golden_mean * 0.8), gridspec_kw={"width_ratios": [4, 1]}
        )
        x = np.arange(len(rows))
        con = np.array([r.auto.con for r in rows], dtype=float)
        lib = np.array([r.auto.lib for r in rows], dtype=float)
        hm = np.array([float(r.human.mean) for r in rows])
        ax.vlines(x, con, lib, color=CON_COLOR, lw=3, label="automated con-lib")
        ax.plot(x, (con + lib) / 2, "o", color=CON_COLOR, markersize=3, label="automated mean")
        ax.plot(x, hm, "x", color=HUMAN_COLOR, markersize=4, label="human mean")
        ax.set_xticks(x)
        ax.set_xticklabels([r.imageId for r in rows], rotation=90)
        ax.set_ylabel("follicles")
        ax.legend(loc="upper left", frameon=False)

        t = report.total
        labels = ["con", "lib", "mean"]
        auto = [t.auto.con, t.auto.lib, float(t.auto.mean)]
        human = [float(t.human.con_mean), float(t.human.lib_mean), float(t.human.mean)]
        xt = np.arange(3)
        axt.bar(xt - 0.2, auto, 0.4, color=CON_COLOR, label="automated")
        axt.bar(xt + 0.2, human, 0.4, color=HUMAN_COLOR, label="human")
        axt.set_xticks(xt)
        axt.set_xticklabels(labels)
        axt.set_title("totals")
        axt.legend(loc="upper left", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def panel_figure(trace, path, title=""):
    """Six panels from original image to identified follicles."""
    ev = trace.evidence
    img = ev.image
    final = render_overlay(img, trace.detections, Stage.FINAL).pixels
    if ev.magnification is Magnification.X200:
        panels = [
            ("original", img.pixels),
            ("dark threshold", _mask_view(ev.dark, img)),
            ("nucleus candidates", render_overlay(img, trace.detections, Stage.NUCLEI, trace).pixels),
            ("light threshold", _mask_view(ev.light, img)),
            ("ZP candidates", render_overlay(img, trace.detections, Stage.ZP, trace).pixels),
            (f"identified follicles: {trace.count}", final),
        ]
    else:
        panels = [
            ("original", img.pixels),
            ("triangle threshold", _mask_view(ev.dark, img)),
            ("size filter", _regions_view(trace.stages.get("size", []), img)),
            ("shape filter", _regions_view(trace.stages.get("shape", []), img)),
            ("colour filter", _regions_view(trace.stages.get("color", []), img)),
            (f"identified follicles: {trace.count}", final),
        ]
    with plt.rc_context(params):
        fig, axes = plt.subplots(2, 3, figsize=(fig_width, fig_width * 0.6))
        for ax, letter, (label, px) in zip(axes.ravel(), "abcdef", panels):
            ax.imshow(px, cmap="gray" if px.ndim == 2 else None, interpolation="nearest")
            ax.set_title(f"({letter}) {label}")
            ax.set_axis_off()
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)


def _mask_view(mask, img):
    if mask is None:
        return np.zeros((img.height, img.width), dtype=np.uint8)
    return np.where(mask.bits, 0, 255).astype(np.uint8)


def _regions_view(regions, img):
    out = np.full((img.height, img.width), 255, dtype=np.uint8)
    for r in regions:
        for y, s, e in zip(r.rows, r.starts, r.ends):
            out[y, s : e + 1] = 0
    return out
