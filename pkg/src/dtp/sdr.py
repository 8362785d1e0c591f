"""Semantics-specific dual-path representation.

Luminance path: a Naka-Rushton response followed by per-channel mean
renormalisation.  Texture path: a stack of residual units, each
``T <- T + conv3x3(leaky(conv3x3(T)))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .numerics import Tensor

NR_EPS = 1e-6
LEAKY_SLOPE = 0.01
_DEN_FLOOR = 1e-12


def softplus_inverse(v: float) -> float:
    if v <= 0:
        raise ValueError(f"softplus inverse needs v > 0, got {v}")
    return float(v + np.log(-np.expm1(-v)))


@dataclass
class NakaRushtonParams:
    """Unconstrained learnables; gamma = exp(log_gamma), sigma/beta = softplus(raw)."""
    log_gamma: Tensor
    sigma_raw: Tensor
    beta_raw: Tensor
    eps: float = NR_EPS

    def gamma(self) -> Tensor:
        return nx.exp(self.log_gamma)

    def sigma(self) -> Tensor:
        return nx.softplus(self.sigma_raw)

    def beta(self) -> Tensor:
        return nx.softplus(self.beta_raw)

    @staticmethod
    def raw_values(gamma: float, sigma: float, beta: float) -> tuple[float, float, float]:
        return float(np.log(gamma)), softplus_inverse(sigma), softplus_inverse(beta)


def naka_rushton_response(x, gamma, sigma, beta) -> Tensor:
    """Core curve ``x^g / (x^g + sigma^g + beta)``; 0 wherever the denominator vanishes."""
    x = nx.as_tensor(x)
    xg = nx.power(x, gamma)
    den = xg + nx.power(sigma, gamma) + beta
    return xg / nx.clamp(den, lo=_DEN_FLOOR)


def naka_rushton_apply(lum, gamma, sigma, beta, eps: float = NR_EPS) -> Tensor:
    """Enhanced luminance for explicit (gamma, sigma, beta) values or tensors.

    The input is clamped to [0, 1] first.  ``mu_in`` and ``mu_out`` are
    per-channel spatial means of the clamped input and of the response.
    """
    x = nx.clamp(nx.as_tensor(lum), 0.0, 1.0)
    dt = x.dtype
    gamma, sigma, beta = (v if isinstance(v, Tensor) else Tensor(np.asarray(v, dtype=dt))
                          for v in (gamma, sigma, beta))
    r = naka_rushton_response(x, gamma, sigma, beta)
    axes = (-3, -2)
    mu_in = x.mean(axis=axes, keepdims=True)
    mu_out = r.mean(axis=axes, keepdims=True)
    return nx.clamp(r * (mu_in / (mu_out + eps)), 0.0, 1.0)


def naka_rushton(lum, p: NakaRushtonParams) -> Tensor:
    return naka_rushton_apply(lum, p.gamma(), p.sigma(), p.beta(), p.eps)


@dataclass
class ResidualUnit:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def __call__(self, t: Tensor) -> Tensor:
        h = nx.leaky_relu(nx.conv2d(t, self.w1) + self.b1, LEAKY_SLOPE)
        return nx.conv2d(h, self.w2) + self.b2


@dataclass
class ResidualStack:
    units: list[ResidualUnit] = field(default_factory=list)

    def __post_init__(self):
        if not self.units:
            raise ValueError("residual stack needs at least one stage")

    @property
    def channels(self) -> int:
        return self.units[0].w1.shape[2]

    def __len__(self) -> int:
        return len(self.units)

    @classmethod
    def zeros(cls, channels: int, stages: int = 4, width: int = 16, k: int = 3,
              dtype=np.float64) -> "ResidualStack":
        def z(*shape):
            return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)
        return cls([ResidualUnit(z(k, k, channels, width), z(width), z(k, k, width, channels),
                                 z(channels)) for _ in range(stages)])


def denoise(tex, stack: ResidualStack, start: int = 0, stop: int | None = None) -> Tensor:
    """Apply residual stages ``start..stop-1`` of ``stack`` to the texture branch."""
    t = nx.as_tensor(tex)
    if t.shape[-1] != stack.channels:
        raise ValueError(f"texture has {t.shape[-1]} channels, stack expects {stack.channels}")
    for unit in stack.units[start:stop]:
        t = t + unit(t)
    return t


def init_naka_rushton(store, gamma: float = 1.0, sigma: float = 0.3, beta: float = 0.05,
                      dtype="float32", prefix: str = "sdr") -> NakaRushtonParams:
    lg, sr, br = NakaRushtonParams.raw_values(gamma, sigma, beta)
    return NakaRushtonParams(store.add(f"{prefix}.log_gamma", np.asarray(lg, dtype=dtype)),
                             store.add(f"{prefix}.sigma_raw", np.asarray(sr, dtype=dtype)),
                             store.add(f"{prefix}.beta_raw", np.asarray(br, dtype=dtype)))


def init_residual_stack(store, rng, channels: int = 9, stages: int = 4, width: int = 16,
                        dtype="float32", prefix: str = "sdr") -> ResidualStack:
    """First conv of each unit He-initialised, second conv zero, so the stack starts as identity."""
    units = []
    for i in range(stages):
        std = np.sqrt(2.0 / (9 * channels))
        w1 = store.add(f"{prefix}.res{i}.w1", (std * rng.standard_normal((3, 3, channels, width)))
                       .astype(dtype))
        b1 = store.add(f"{prefix}.res{i}.b1", np.zeros(width, dtype=dtype))
        w2 = store.add(f"{prefix}.res{i}.w2", np.zeros((3, 3, width, channels), dtype=dtype))
        b2 = store.add(f"{prefix}.res{i}.b2", np.zeros(channels, dtype=dtype))
        units.append(ResidualUnit(w1, b1, w2, b2))
    return ResidualStack(units)
