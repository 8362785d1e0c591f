"""2-D convolution and channel-to-space rearrangement (NHWC layout)."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, _make, as_tensor, reshape


def _same_pads(size: int, k: int, stride: int) -> tuple[int, int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2, out


def conv_output_shape(h: int, w: int, kh: int, kw: int, stride: int, padding: str):
    if padding == "same":
        return -(-h // stride), -(-w // stride)
    return (h - kh) // stride + 1, (w - kw) // stride + 1


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """Cross-correlate ``x`` (N,H,W,Cin or H,W,Cin) with ``kernel`` (kh,kw,Cin,Cout).

    ``same`` zero-pads so the output is ceil(H/stride) x ceil(W/stride);
    ``valid`` uses no padding.
    """
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding not in ("same", "valid"):
        raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
    if x.ndim == 3:
        out = conv2d(reshape(x, (1,) + x.shape), kernel, stride, padding)
        return reshape(out, out.shape[1:])
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[3] != kernel.shape[2]:
        raise ValueError(
            f"conv2d shape mismatch: input {tuple(x.shape)} vs kernel {tuple(kernel.shape)} "
            "(kernel must be kh x kw x Cin x Cout with Cin equal to the input channels)")

    n, h, w, cin = x.shape
    kh, kw, _, cout = kernel.shape
    if padding == "same":
        pt, pb, _ = _same_pads(h, kh, stride)
        pl, pr, _ = _same_pads(w, kw, stride)
    else:
        pt = pb = pl = pr = 0
        if h < kh or w < kw:
            raise ValueError(f"conv2d shape mismatch: input {tuple(x.shape)} smaller than "
                             f"kernel {tuple(kernel.shape)} with valid padding")
    xp = x.data
    if pt or pb or pl or pr:
        xp = np.pad(xp, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    ho = (xp.shape[1] - kh) // stride + 1
    wo = (xp.shape[2] - kw) // stride + 1

    # (N, Ho, Wo, Cin, kh, kw)
    cols = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    wk = kernel.data
    out = np.tensordot(cols, wk.transpose(2, 0, 1, 3), axes=([3, 4, 5], [0, 1, 2]))

    def bw(g):
        gk = np.tensordot(cols, g, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += g @ wk[i, j].T
        return gxp[:, pt:pt + h, pl:pl + w, :], gk

    out = out.astype(np.result_type(x.dtype, kernel.dtype), copy=False)
    return _make(out, (x, kernel), bw, "conv2d")


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Channel-to-space: (N,H,W,C*r*r) -> (N,H*r,W*r,C).

    Output pixel (h*r+i, w*r+j, c) reads input channel (i*r + j)*C + c.
    """
    if x.ndim != 4 or x.shape[3] % (r * r):
        raise ValueError(f"pixel_shuffle needs N,H,W,C with C divisible by {r * r}, got {x.shape}")
    n, h, w, crr = x.shape
    c = crr // (r * r)
    out = x.data.reshape(n, h, w, r, r, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, h * r, w * r, c)

    def bw(g):
        return (g.reshape(n, h, r, w, r, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, h, w, crr),)

    return _make(out, (x,), bw, "pixel_shuffle")


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Space-to-channel, the exact inverse of :func:`pixel_shuffle`."""
    n, hr, wr, c = x.shape
    if hr % r or wr % r:
        raise ValueError(f"pixel_unshuffle needs H, W divisible by {r}, got {x.shape}")
    h, w = hr // r, wr // r
    out = x.data.reshape(n, h, r, w, r, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, h, w, r * r * c)

    def bw(g):
        return (g.reshape(n, h, w, r, r, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, hr, wr, c),)

    return _make(out, (x,), bw, "pixel_unshuffle")
