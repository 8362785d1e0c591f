"""Synthetic paired data: procedural well-lit HR scenes and dark, small LR copies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPPORTED_SCALES = (2, 4)


@dataclass(frozen=True)
class DegradationSpec:
    """``clamp(box_downsample(hr, scale) ** gamma * exposure + N(0, noise^2))``."""
    exposure: float = 1.0
    gamma: float = 1.0
    noise: float = 0.0
    scale: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.exposure <= 1:
            raise ValueError(f"exposure must lie in (0, 1], got {self.exposure}")
        if self.gamma < 1:
            raise ValueError(f"gamma-darken exponent must be >= 1, got {self.gamma}")
        if self.noise < 0:
            raise ValueError(f"noise std must be >= 0, got {self.noise}")
        if self.scale not in SUPPORTED_SCALES:
            raise ValueError(f"scale must be one of {SUPPORTED_SCALES}, got {self.scale}")

    @classmethod
    def from_ev(cls, ev: float, **kw) -> "DegradationSpec":
        """Exposure factor ``2 ** ev``; ev = -1 halves the light."""
        return cls(exposure=float(2.0 ** ev), **kw)


def box_downsample(img: np.ndarray, s: int) -> np.ndarray:
    h, w = img.shape[0], img.shape[1]
    if h % s or w % s:
        raise ValueError(f"image {h}x{w} is not divisible by scale {s}")
    return img.reshape(h // s, s, w // s, s, -1).mean(axis=(1, 3))


def box_upsample(img: np.ndarray, s: int) -> np.ndarray:
    return np.repeat(np.repeat(img, s, axis=0), s, axis=1)


def degrade(hr, spec: DegradationSpec, stream: int = 0) -> np.ndarray:
    """Darken and shrink one H x W x 3 image.  ``stream`` picks an independent noise draw."""
    hr = np.asarray(hr)
    if hr.ndim != 3:
        raise ValueError(f"degrade needs an H x W x C image, got shape {hr.shape}")
    small = box_downsample(hr.astype(np.float64), spec.scale)
    out = small ** spec.gamma * spec.exposure
    if spec.noise > 0:
        rng = np.random.default_rng([spec.seed, stream])
        out = out + rng.normal(0.0, spec.noise, out.shape)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def synth_hr(rng: np.random.Generator, size: int) -> np.ndarray:
    """A size x size x 3 scene: smooth shading, a few flat shapes and one striped patch."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.empty((size, size, 3))
    for c in range(3):
        gx, gy = rng.uniform(-0.3, 0.3, 2)
        fx, fy, ph = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0, 2 * np.pi)
        img[..., c] = (rng.uniform(0.3, 0.7) + gx * (xx - 0.5) + gy * (yy - 0.5)
                       + 0.1 * np.sin(2 * np.pi * (fx * xx + fy * yy) + ph))
    for _ in range(rng.integers(2, 5)):
        color = rng.uniform(0.05, 0.95, 3)
        cy, cx = rng.uniform(0.1, 0.9, 2)
        r = rng.uniform(0.1, 0.3)
        if rng.random() < 0.5:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r ** 2
        else:
            mask = (np.abs(yy - cy) < r) & (np.abs(xx - cx) < rng.uniform(0.1, 0.3))
        img[mask] = color
    # fine detail that survives only at full resolution
    y0, x0 = rng.integers(0, size // 2, 2)
    period = int(rng.integers(2, 5))
    stripes = ((np.arange(size // 2) // (period / 2)) % 2)[None, :] * 0.3 - 0.15
    patch = img[y0:y0 + size // 2, x0:x0 + size // 2]
    patch += stripes[:, :patch.shape[1], None] if rng.random() < 0.5 else \
        stripes.T[:patch.shape[0], :, None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


@dataclass
class PairedSet:
    lr: np.ndarray  # N x h x w x 3
    hr: np.ndarray  # N x sh x sw x 3
    names: list[str]

    def __post_init__(self):
        if len(self.lr) != len(self.hr) or len(self.lr) != len(self.names):
            raise ValueError("lr, hr and names must have the same length")
        if len(self.lr):
            s_h = self.hr.shape[1] / self.lr.shape[1]
            s_w = self.hr.shape[2] / self.lr.shape[2]
            if s_h != s_w or s_h != int(s_h):
                raise ValueError(f"inconsistent scale between lr {self.lr.shape} and "
                                 f"hr {self.hr.shape}")

    @property
    def scale(self) -> int:
        return int(self.hr.shape[1] // self.lr.shape[1])

    def __len__(self) -> int:
        return len(self.names)


def make_pairs(hr_images, spec: DegradationSpec, names=None) -> PairedSet:
    hr = np.stack([np.asarray(h, dtype=np.float32) for h in hr_images])
    lr = np.stack([degrade(h, spec, stream=i) for i, h in enumerate(hr)])
    names = list(names) if names is not None else [f"{i:04d}" for i in range(len(hr))]
    return PairedSet(lr, hr, names)


def synthetic_pairs(n: int, lr_size: int, spec: DegradationSpec, seed: int) -> PairedSet:
    """``n`` procedural pairs; fully determined by (seed, spec)."""
    rng = np.random.default_rng(seed)
    hr = [synth_hr(rng, lr_size * spec.scale) for _ in range(n)]
    return make_pairs(hr, spec)


def spec_from_config(data_cfg, scale: int) -> DegradationSpec:
    return DegradationSpec.from_ev(data_cfg.ev, gamma=data_cfg.gamma, noise=data_cfg.noise,
                                   scale=scale, seed=data_cfg.seed)


def train_test_sets(cfg) -> tuple[PairedSet, PairedSet]:
    """Disjoint train / held-out synthetic sets from the ``data.*`` config keys."""
    d = cfg.data
    spec = spec_from_config(d, cfg.csr.scale)
    train = synthetic_pairs(d.n_train, d.lr_size, spec, seed=d.seed)
    test_spec = DegradationSpec(spec.exposure, spec.gamma, spec.noise, spec.scale, spec.seed + 1)
    test = synthetic_pairs(d.n_test, d.lr_size, test_spec, seed=d.seed + 1000)
    return train, test
