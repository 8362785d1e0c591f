"""Report figures (matplotlib, Agg backend).  PNG metadata is stripped so reruns are byte-identical."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io_utils import atomic_write_bytes  # noqa: E402

_COLORS = ("tab:red", "tab:green", "tab:blue")


def _save(fig, path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())
    return Path(path)


def plot_histograms(hist: np.ndarray, path, title: str = "") -> Path:
    """3 x 256 counts drawn as one line per channel."""
    fig, ax = plt.subplots(figsize=(5, 3))
    x = np.arange(hist.shape[1])
    for c, name in enumerate("RGB"):
        ax.plot(x, hist[c], color=_COLORS[c], lw=1, label=name)
    ax.set_xlim(0, hist.shape[1] - 1)
    ax.set_xlabel("bin")
    ax.set_ylabel("count")
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_loss(trace, path) -> Path:
    steps = [r.step for r in trace]
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(steps, [r.total for r in trace], label="total")
    ax.plot(steps, [r.l1 for r in trace], label="L1")
    if any(r.kl for r in trace):
        ax2 = ax.twinx()
        ax2.plot(steps, [r.kl for r in trace], color="tab:gray", ls="--", label="KL")
        ax2.set_ylabel("KL")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_ablation(report, path) -> Path:
    labels = [r.label for r in report.rows]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    for ax, key, name in ((axes[0], "psnr", "PSNR (dB)"), (axes[1], "ssim", "SSIM")):
        vals = [getattr(r, key) for r in report.rows]
        ax.bar(range(len(vals)), vals, color=["tab:gray"] + ["tab:blue"] * (len(vals) - 2)
               + ["tab:orange"])
        ax.set_xticks(range(len(vals)))
        ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
        ax.set_ylabel(name)
        lo = min(vals)
        ax.set_ylim(lo - 0.1 * (max(vals) - lo + 1e-9) - (1.0 if key == "psnr" else 0.02), None)
    fig.suptitle(f"module ablation, x{report.scale}")
    fig.tight_layout()
    return _save(fig, path)


def plot_panels(panels: dict[str, np.ndarray], path) -> Path:
    """Side-by-side images; each panel is min-max scaled to [0, 1] for display."""
    n = len(panels)
    fig, axes = plt.subplots(1, n, figsize=(2.2 * n, 2.6))
    for ax, (name, img) in zip(np.atleast_1d(axes), panels.items()):
        img = np.asarray(img, dtype=np.float64)
        lo, hi = img.min(), img.max()
        ax.imshow((img - lo) / (hi - lo) if hi > lo else np.zeros_like(img),
                  interpolation="nearest")
        ax.set_title(name, fontsize=8)
        ax.axis("off")
    fig.tight_layout()
    return _save(fig, path)
