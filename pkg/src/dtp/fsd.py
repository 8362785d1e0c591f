"""Frequency-aware structural decoupling.

A one-level separable wavelet built from lifting steps (one predict and one
update per axis, two taps each).  Lifting is invertible for any tap values,
so the taps can be trained freely without losing perfect reconstruction.

Conventions, for a 2x2 block ``[[a, b], [c, d]]`` under Haar taps:

* ``LL = (a + b + c + d) / 4``  (mean-normalised, so a constant image maps to itself)
* ``LH``: low along width, high along height  -> ``((c + d) - (a + b)) / 2``
* ``HL``: high along width, low along height  -> ``((b - a) + (d - c)) / 2``
* ``HH``: high along both                      -> ``(d - c) - (b - a)``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Tensor

W_AXIS, H_AXIS = -2, -3
PREDICT, UPDATE = 0, 1
# theta[axis, step, tap]; axis 0 = horizontal (width), 1 = vertical (height).
# predict taps act on even[n], even[n+1]; update taps act on detail[n], detail[n-1].
HAAR_THETA = np.array([[[1.0, 0.0], [0.5, 0.0]],
                       [[1.0, 0.0], [0.5, 0.0]]])


def haar_theta(dtype=np.float32) -> np.ndarray:
    return HAAR_THETA.astype(dtype)


@dataclass
class LiftingParams:
    theta: Tensor  # shape (2, 2, 2)

    def tap(self, axis: int, step: int, k: int) -> Tensor:
        return self.theta[axis, step, k]


@dataclass
class SubbandWeights:
    logits: Tensor  # shape (4,)

    def effective(self) -> Tensor:
        return nx.softmax(self.logits, axis=0)


@dataclass
class KLPrior:
    mu0: float = 0.35
    sigma0: float = 0.25

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError(f"KL prior sigma0 must be > 0, got {self.sigma0}")


@dataclass
class SubbandSet:
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor
    pad: tuple[int, int] = (0, 0)  # rows / cols added by reflect padding

    def __post_init__(self):
        shapes = {b.shape for b in self.bands()}
        if len(shapes) != 1:
            raise ValueError(f"subband shapes differ: {[b.shape for b in self.bands()]}")

    def bands(self) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return self.ll, self.lh, self.hl, self.hh

    @property
    def shape(self):
        return self.ll.shape


def _shift_next(x: Tensor, axis: int) -> Tensor:
    n = x.shape[axis]
    return nx.take(x, list(range(1, n)) + [n - 1], axis)


def _shift_prev(x: Tensor, axis: int) -> Tensor:
    n = x.shape[axis]
    return nx.take(x, [0] + list(range(n - 1)), axis)


def _predict(even: Tensor, p: LiftingParams, ax: int, axis: int) -> Tensor:
    return even * p.tap(ax, PREDICT, 0) + _shift_next(even, axis) * p.tap(ax, PREDICT, 1)


def _update(detail: Tensor, p: LiftingParams, ax: int, axis: int) -> Tensor:
    return detail * p.tap(ax, UPDATE, 0) + _shift_prev(detail, axis) * p.tap(ax, UPDATE, 1)


def lift_forward(x: Tensor, p: LiftingParams, ax: int, axis: int) -> tuple[Tensor, Tensor]:
    n = x.shape[axis]
    even = nx.take(x, range(0, n, 2), axis)
    odd = nx.take(x, range(1, n, 2), axis)
    detail = odd - _predict(even, p, ax, axis)
    smooth = even + _update(detail, p, ax, axis)
    return smooth, detail


def lift_inverse(smooth: Tensor, detail: Tensor, p: LiftingParams, ax: int, axis: int) -> Tensor:
    even = smooth - _update(detail, p, ax, axis)
    odd = detail + _predict(even, p, ax, axis)
    return nx.interleave(even, odd, axis)


def _reflect_pad_end(x: Tensor, axis: int) -> Tensor:
    n = x.shape[axis]
    extra = n - 2 if n > 1 else 0
    return nx.take(x, list(range(n)) + [extra], axis)


def decompose(image, p: LiftingParams) -> SubbandSet:
    """Analysis: image (H,W,C or N,H,W,C) -> four half-resolution subbands.

    Odd heights/widths are reflect-padded by one row/column first; the
    padding is recorded on the result so :func:`reconstruct` can crop it.
    """
    x = nx.as_tensor(image)
    if x.ndim not in (3, 4) or x.size == 0:
        raise ValueError(f"decompose needs a non-empty H,W,C or N,H,W,C image, got shape {x.shape}")
    ph, pw = x.shape[H_AXIS] % 2, x.shape[W_AXIS] % 2
    if ph:
        x = _reflect_pad_end(x, H_AXIS)
    if pw:
        x = _reflect_pad_end(x, W_AXIS)
    low, high = lift_forward(x, p, 0, W_AXIS)
    ll, lh = lift_forward(low, p, 1, H_AXIS)
    hl, hh = lift_forward(high, p, 1, H_AXIS)
    return SubbandSet(ll, lh, hl, hh, pad=(ph, pw))


def reconstruct(subbands: SubbandSet, p: LiftingParams) -> Tensor:
    """Synthesis: exact inverse of :func:`decompose` for the same taps."""
    shapes = [b.shape for b in subbands.bands()]
    if len(set(shapes)) != 1:
        raise ValueError(f"mismatched subband shapes {shapes}")
    low = lift_inverse(subbands.ll, subbands.lh, p, 1, H_AXIS)
    high = lift_inverse(subbands.hl, subbands.hh, p, 1, H_AXIS)
    x = lift_inverse(low, high, p, 0, W_AXIS)
    ph, pw = subbands.pad
    if ph:
        x = nx.take(x, range(x.shape[H_AXIS] - 1), H_AXIS)
    if pw:
        x = nx.take(x, range(x.shape[W_AXIS] - 1), W_AXIS)
    return x


def reweight(subbands: SubbandSet, alpha: SubbandWeights) -> SubbandSet:
    """Scale each subband by its simplex weight (softmax of the logits)."""
    w = alpha.effective()
    bands = [b * w[i] for i, b in enumerate(subbands.bands())]
    return SubbandSet(*bands, pad=subbands.pad)


def kl_loss(ll: Tensor, prior: KLPrior) -> Tensor:
    """KL( N(mu, s^2) || N(mu0, sigma0^2) ) from the empirical moments of ``ll``.

    ``s`` is the population standard deviation.  Inside the log it is floored
    at 1e-6 so a constant band (s = 0) gives a finite, large loss.
    """
    ll = nx.as_tensor(ll)
    if ll.size < 2:
        raise ValueError("kl_loss needs at least 2 elements")
    mu = ll.mean()
    centered = ll - mu
    var = (centered * centered).mean()
    s = nx.clamp(nx.sqrt(var), lo=1e-6)
    s0 = prior.sigma0
    dm = mu - prior.mu0
    return (float(np.log(s0)) - nx.log(s)) + (var + dm * dm) / (2 * s0 * s0) - 0.5


def kl_closed_form(mu: float, s: float, mu0: float, sigma0: float) -> float:
    return float(np.log(sigma0 / s) + (s * s + (mu - mu0) ** 2) / (2 * sigma0 * sigma0) - 0.5)


def split(reweighted: SubbandSet) -> tuple[Tensor, Tensor]:
    """Luminance branch (LL) and texture branch (LH, HL, HH stacked on channels)."""
    return reweighted.ll, nx.concat([reweighted.lh, reweighted.hl, reweighted.hh], axis=-1)
