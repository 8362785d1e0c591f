"""End-to-end finite-difference check of every learnable parameter group."""

from __future__ import annotations

import numpy as np

from .. import numerics as nx
from .config import DtpConfig
from .model import DtpModel
from .train import loss_terms

JITTER = 0.25

GROUPS = {
    "lifting": ("fsd.theta",),
    "subband weights": ("fsd.alpha_logits",),
    "naka-rushton": ("sdr.log_gamma", "sdr.sigma_raw", "sdr.beta_raw"),
    "residual stack": ("sdr.res",),
    "fusion": ("csr.",),
    "decoder": ("dec.",),
}


def group_of(name: str) -> str:
    for group, prefixes in GROUPS.items():
        if any(name.startswith(p) for p in prefixes):
            return group
    raise KeyError(name)


def jitter(model: DtpModel, rng: np.random.Generator, rel: float = JITTER) -> None:
    """Move every learnable tensor to a generic point on the scale of its own values.

    Nonzero tensors get noise at ``rel`` times their RMS.  Zero-initialised
    kernels use ``1/sqrt(fan_in)`` as their scale and other zero tensors 0.1,
    so the network stays out of the output clamp.
    """
    for name in model.store.learnable_names():
        t = model.store[name]
        rms = float(np.sqrt(np.mean(np.square(t.data))))
        if rms == 0:
            rms = 1 / np.sqrt(np.prod(t.shape[:-1])) if t.ndim == 4 else 0.1
        t.data = np.asarray(t.data + rel * rms * rng.standard_normal(t.shape), dtype=model.dtype)


def model_gradcheck(cfg: DtpConfig | None = None) -> tuple[nx.GradCheckReport, DtpModel]:
    """Check d(objective)/d(theta) for all parameters of a 64-bit model on one small patch.

    The objective is the training loss (L1 reconstruction plus KL, with the
    KL weight forced positive so its path is exercised).

    All parameters are jittered first so that zero-initialised weights (and
    the gradients flowing through them) are generic.  ``gradcheck.max_entries``
    entries per tensor are sampled.  With ``gradcheck.kink_aware`` the step
    is reduced per entry whenever x +- h would land on another branch of a
    relu / abs / clamp / max than x itself.
    """
    cfg = (cfg or DtpConfig()).copy()
    g = cfg.gradcheck
    if cfg.train.lambda_kl == 0:
        cfg.train.lambda_kl = 0.01
    model = DtpModel(cfg, dtype="float64")
    rng = np.random.default_rng(g.seed)
    jitter(model, rng)
    lr = rng.uniform(0.02, 0.3, (1, g.patch, g.patch, 3))
    hr = rng.uniform(0.0, 1.0, (1, model.scale * g.patch, model.scale * g.patch, 3))

    def f():
        return loss_terms(model, lr, hr, cfg.train)[0]

    report = nx.finite_diff_check(f, model.store, step=g.step, tol=g.tol,
                                  max_entries=g.max_entries, seed=g.seed,
                                  kink_aware=g.kink_aware, min_step=g.min_step)
    return report, model


def group_summary(report: nx.GradCheckReport) -> dict[str, float]:
    out: dict[str, float] = {}
    for name, chk in report.params.items():
        grp = group_of(name)
        out[grp] = max(out.get(grp, 0.0), chk.max_rel_err)
    return out
