"""Full-reference quality metrics and RGB histograms.

LPIPS needs a pretrained perceptual network and is not computed; reports
carry ``lpips: n/a`` so they keep the same columns as published tables.
"""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_CAP = 99.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
HIST_BINS = 256


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """10*log10(1/MSE) with peak 1; capped at 99 dB when MSE < 1e-12."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-12:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' Gaussian filtering of an H x W x C array."""
    k = len(g)
    rows = np.tensordot(sliding_window_view(img, k, axis=0), g, axes=([-1], [0]))
    return np.tensordot(sliding_window_view(rows, k, axis=1), g, axes=([-1], [0]))


def ssim(a, b, data_range: float = 1.0) -> float:
    """Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), mean over windows and channels."""
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[0], a.shape[1]) < SSIM_WIN:
        raise ValueError(f"ssim needs images of at least {SSIM_WIN}x{SSIM_WIN}, got {a.shape}")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def rgb_histograms(img) -> np.ndarray:
    """3 x 256 counts; bin i covers [i/256, (i+1)/256), the last bin also takes 1.0."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"rgb_histograms needs an H x W x 3 image, got {img.shape}")
    idx = np.clip(np.floor(img * HIST_BINS), 0, HIST_BINS - 1).astype(np.int64)
    return np.stack([np.bincount(idx[..., c].ravel(), minlength=HIST_BINS) for c in range(3)])


def histograms_to_text(hist: np.ndarray, delimiter: str = ",") -> str:
    buf = io.StringIO()
    buf.write(delimiter.join(["bin", "r", "g", "b"]) + "\n")
    for i in range(hist.shape[1]):
        buf.write(delimiter.join([str(i)] + [str(int(hist[c, i])) for c in range(3)]) + "\n")
    return buf.getvalue()


@dataclass
class ImageScore:
    name: str
    psnr: float
    ssim: float


@dataclass
class MetricsReport:
    images: list[ImageScore] = field(default_factory=list)
    histograms: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([s.psnr for s in self.images])) if self.images else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([s.ssim for s in self.images])) if self.images else float("nan")

    def to_csv(self, delimiter: str = ",") -> str:
        lines = [delimiter.join(["name", "psnr_db", "ssim", "lpips"])]
        for s in self.images:
            lines.append(delimiter.join([s.name, f"{s.psnr:.6f}", f"{s.ssim:.6f}", "n/a"]))
        lines.append(delimiter.join(["MEAN", f"{self.mean_psnr:.6f}", f"{self.mean_ssim:.6f}",
                                     "n/a"]))
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        return (f"images: {len(self.images)}\n"
                f"psnr_db: {self.mean_psnr:.4f}\n"
                f"ssim: {self.mean_ssim:.6f}\n"
                f"lpips: n/a\n")


def score_pair(name: str, pred, gt, with_histograms: bool = False):
    score = ImageScore(name, psnr(pred, gt), ssim(pred, gt))
    hist = rgb_histograms(pred) if with_histograms else None
    return score, hist


def evaluate_pairs(pairs, with_histograms: bool = False, workers: int = 1) -> MetricsReport:
    """Score ``(name, pred, gt)`` triples; results keep input order whatever ``workers`` is."""
    pairs = list(pairs)
    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda t: score_pair(*t, with_histograms), pairs))
    else:
        results = [score_pair(*t, with_histograms) for t in pairs]
    report = MetricsReport()
    for (name, _, _), (score, hist) in zip(pairs, results):
        report.images.append(score)
        if hist is not None:
            report.histograms[name] = hist
    return report
