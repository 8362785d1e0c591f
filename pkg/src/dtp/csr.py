"""Cross-frequency semantic recomposition and the upsampling decoder.

Both branches are first projected to a common width (3x3 convs), merged by
a 1x1 conv into a shared feature map, and then scaled by either a
per-channel mask (global average -> bottleneck -> sigmoid) or a per-pixel
mask (channel mean/max -> kxk conv -> sigmoid).  A scalar gate per image
blends the two masked maps.

The decoder adds a projected copy of the texture branch, mixes, refines
with one residual block and upsamples with conv + channel-to-space stages
of factor 2.  The wavelet split already halved the resolution, so the
decoder expands by ``2 * scale`` in total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import numerics as nx
from .numerics import Tensor

LEAKY_SLOPE = 0.01
SUPPORTED_SCALES = (2, 4)


@dataclass
class FusionParams:
    proj_i_w: Tensor
    proj_i_b: Tensor
    proj_t_w: Tensor
    proj_t_b: Tensor
    merge_w: Tensor
    merge_b: Tensor
    ca_w1: Tensor
    ca_b1: Tensor
    ca_w2: Tensor
    ca_b2: Tensor
    sa_w: Tensor
    sa_b: Tensor
    gate_w: Tensor
    gate_b: Tensor

    @property
    def width(self) -> int:
        return self.merge_w.shape[3]

    def attention_tensors(self) -> list[Tensor]:
        return [self.ca_w1, self.ca_b1, self.ca_w2, self.ca_b2, self.sa_w, self.sa_b,
                self.gate_w, self.gate_b]


@dataclass
class DecoderParams:
    skip_w: Tensor
    skip_b: Tensor
    mix_w: Tensor
    mix_b: Tensor
    ref_w1: Tensor
    ref_b1: Tensor
    ref_w2: Tensor
    ref_b2: Tensor
    up_w: list
    up_b: list
    out_w: Tensor
    out_b: Tensor

    def tensors(self) -> list[Tensor]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.extend(v if isinstance(v, list) else [v])
        return out


def upsample_stages(scale: int) -> int:
    if scale not in SUPPORTED_SCALES:
        raise ValueError(f"unsupported scale {scale}; expected one of {SUPPORTED_SCALES}")
    return int(math.log2(2 * scale))


def _check_pair(lum: Tensor, tex: Tensor) -> None:
    if lum.shape[:-1] != tex.shape[:-1]:
        raise ValueError(f"luminance {lum.shape} and texture {tex.shape} differ spatially")


def entry_features(lum, tex, p: FusionParams) -> tuple[Tensor, Tensor, Tensor]:
    """Projected luminance, projected texture and the merged shared feature map."""
    lum, tex = nx.as_tensor(lum), nx.as_tensor(tex)
    _check_pair(lum, tex)
    pi = nx.conv2d(lum, p.proj_i_w) + p.proj_i_b
    pt = nx.conv2d(tex, p.proj_t_w) + p.proj_t_b
    feats = nx.conv2d(nx.concat([pi, pt], axis=-1), p.merge_w) + p.merge_b
    return pi, pt, feats


def channel_mask(feats: Tensor, p: FusionParams) -> Tensor:
    desc = feats.mean(axis=(-3, -2), keepdims=True)
    h = nx.relu(nx.conv2d(desc, p.ca_w1) + p.ca_b1)
    return nx.sigmoid(nx.conv2d(h, p.ca_w2) + p.ca_b2)


def spatial_mask(feats: Tensor, p: FusionParams) -> Tensor:
    pooled = nx.concat([feats.mean(axis=-1, keepdims=True), nx.max_(feats, axis=-1, keepdims=True)],
                       axis=-1)
    return nx.sigmoid(nx.conv2d(pooled, p.sa_w) + p.sa_b)


def gate_value(pi: Tensor, pt: Tensor, p: FusionParams) -> Tensor:
    desc = nx.concat([pi.mean(axis=(-3, -2), keepdims=True), pt.mean(axis=(-3, -2), keepdims=True)],
                     axis=-1)
    return nx.sigmoid(nx.conv2d(desc, p.gate_w) + p.gate_b)


def channel_attention(lum, tex, p: FusionParams) -> Tensor:
    _, _, feats = entry_features(lum, tex, p)
    return feats * channel_mask(feats, p)


def spatial_attention(lum, tex, p: FusionParams) -> Tensor:
    _, _, feats = entry_features(lum, tex, p)
    return feats * spatial_mask(feats, p)


@dataclass
class FusionTrace:
    fused: Tensor
    channel: Tensor
    spatial: Tensor
    gate: Tensor
    features: Tensor


def gated_fuse(lum, tex, p: FusionParams, trace: bool = False):
    """``G * CA + (1 - G) * SA`` with a scalar sigmoid gate per image."""
    pi, pt, feats = entry_features(lum, tex, p)
    ca = feats * channel_mask(feats, p)
    sa = feats * spatial_mask(feats, p)
    g = gate_value(pi, pt, p)
    fused = g * ca + (1.0 - g) * sa
    if trace:
        return FusionTrace(fused, ca, sa, g, feats)
    return fused


def rebuild_upsample(fused, tex, p: DecoderParams, scale: int) -> Tensor:
    """Texture skip + mixing + refinement + (conv, channel-to-space) x log2(2*scale) + output conv."""
    n_up = upsample_stages(scale)
    if len(p.up_w) != n_up:
        raise ValueError(f"decoder has {len(p.up_w)} upsampling stages, scale {scale} "
                         f"needs {n_up}")
    fused, tex = nx.as_tensor(fused), nx.as_tensor(tex)
    _check_pair(fused, tex)
    z = fused + (nx.conv2d(tex, p.skip_w) + p.skip_b)
    z = nx.leaky_relu(nx.conv2d(z, p.mix_w) + p.mix_b, LEAKY_SLOPE)
    h = nx.leaky_relu(nx.conv2d(z, p.ref_w1) + p.ref_b1, LEAKY_SLOPE)
    z = z + (nx.conv2d(h, p.ref_w2) + p.ref_b2)
    squeeze = z.ndim == 3
    if squeeze:
        z = z.reshape((1,) + z.shape)
    for w, b in zip(p.up_w, p.up_b):
        z = nx.pixel_shuffle(nx.conv2d(z, w) + b, 2)
    out = nx.clamp(nx.conv2d(z, p.out_w) + p.out_b, 0.0, 1.0)
    if squeeze:
        out = out.reshape(out.shape[1:])
    return out


def _normal(rng, shape, fan_in, gain, dtype):
    return (gain / math.sqrt(fan_in)) * rng.standard_normal(shape).astype(dtype)


def init_fusion_params(store, rng, channels: int = 3, width: int = 32, reduction: int = 4,
                       spatial_kernel: int = 7, dtype="float32", prefix: str = "csr") -> FusionParams:
    """Register fusion parameters in ``store``; attention and gate start near neutral."""
    c, cf, k = channels, width, spatial_kernel
    hidden = max(cf // reduction, 1)
    z = lambda *s: np.zeros(s, dtype=dtype)  # noqa: E731
    spec = [
        ("proj_i_w", _normal(rng, (3, 3, c, cf), 9 * c, 1.0, dtype)),
        ("proj_i_b", z(cf)),
        ("proj_t_w", _normal(rng, (3, 3, 3 * c, cf), 27 * c, 1.0, dtype)),
        ("proj_t_b", z(cf)),
        ("merge_w", _normal(rng, (1, 1, 2 * cf, cf), 2 * cf, 1.0, dtype)),
        ("merge_b", z(cf)),
        ("ca_w1", _normal(rng, (1, 1, cf, hidden), cf, math.sqrt(2), dtype)),
        ("ca_b1", z(hidden)),
        ("ca_w2", _normal(rng, (1, 1, hidden, cf), hidden, 0.1, dtype)),
        ("ca_b2", z(cf)),
        ("sa_w", _normal(rng, (k, k, 2, 1), 2 * k * k, 0.1, dtype)),
        ("sa_b", z(1)),
        ("gate_w", z(1, 1, 2 * cf, 1)),
        ("gate_b", z(1)),
    ]
    return FusionParams(**{name: store.add(f"{prefix}.{name}", v) for name, v in spec})


def init_decoder_params(store, rng, channels: int = 3, width: int = 32, scale: int = 2,
                        out_channels: int = 3, dtype="float32", prefix: str = "dec") -> DecoderParams:
    """Register decoder parameters; the output starts close to a flat 0.5 image."""
    c, cf = channels, width
    n_up = upsample_stages(scale)
    z = lambda *s: np.zeros(s, dtype=dtype)  # noqa: E731
    add = lambda name, v: store.add(f"{prefix}.{name}", v)  # noqa: E731
    he = math.sqrt(2)
    skip_w = add("skip_w", _normal(rng, (1, 1, 3 * c, cf), 3 * c, 1.0, dtype))
    skip_b = add("skip_b", z(cf))
    mix_w = add("mix_w", _normal(rng, (3, 3, cf, cf), 9 * cf, he, dtype))
    mix_b = add("mix_b", z(cf))
    ref_w1 = add("ref_w1", _normal(rng, (3, 3, cf, cf), 9 * cf, he, dtype))
    ref_b1 = add("ref_b1", z(cf))
    ref_w2 = add("ref_w2", z(3, 3, cf, cf))
    ref_b2 = add("ref_b2", z(cf))
    up_w, up_b = [], []
    for i in range(n_up):
        up_w.append(add(f"up{i}_w", _normal(rng, (3, 3, cf, 4 * cf), 9 * cf, 1.0, dtype)))
        up_b.append(add(f"up{i}_b", z(4 * cf)))
    out_w = add("out_w", _normal(rng, (3, 3, cf, out_channels), 9 * cf, 1.0, dtype))
    out_b = add("out_b", np.full(out_channels, 0.5, dtype=dtype))
    return DecoderParams(skip_w, skip_b, mix_w, mix_b, ref_w1, ref_b1, ref_w2, ref_b2,
                         up_w, up_b, out_w, out_b)
