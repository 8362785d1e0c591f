"""End-to-end model: wavelet split, dual-path branches, gated fusion, decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import csr, fsd, sdr
from .. import numerics as nx
from ..numerics import ParamStore, Tensor
from .config import DtpConfig

CHANNELS = 3


@dataclass
class ForwardTrace:
    subbands: fsd.SubbandSet
    reweighted: fsd.SubbandSet
    lum: Tensor
    tex: Tensor
    lum_enhanced: Tensor
    tex_denoised: Tensor
    fusion: csr.FusionTrace
    output: Tensor


class DtpModel:
    """All learnable state lives in ``self.store``; the attributes are views into it.

    Disabled modules are pinned to a neutral setting and frozen:

    * FSD off: Haar taps, uniform subband weights (zero logits), no KL term.
    * SDR off: luminance passes through unchanged, residual stack zero.
    * CSR off: attention and gate weights zero, so both masks and the gate are 0.5.
    """

    def __init__(self, config: DtpConfig | None = None, dtype="float32"):
        self.config = cfg = (config or DtpConfig()).copy()
        self.scale = cfg.csr.scale
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(cfg.model.seed)
        s = self.store = ParamStore()
        self.lifting = fsd.LiftingParams(s.add("fsd.theta", fsd.haar_theta(self.dtype)))
        self.alpha = fsd.SubbandWeights(s.add("fsd.alpha_logits", np.zeros(4, dtype=self.dtype)))
        self.prior = fsd.KLPrior(cfg.fsd.mu0, cfg.fsd.sigma0)
        self.nr = sdr.init_naka_rushton(s, cfg.sdr.gamma_init, cfg.sdr.sigma_init,
                                        cfg.sdr.beta_init, dtype=self.dtype)
        self.stack = sdr.init_residual_stack(s, rng, channels=3 * CHANNELS, stages=cfg.sdr.stages,
                                             width=cfg.sdr.width, dtype=self.dtype)
        self.fusion = csr.init_fusion_params(s, rng, channels=CHANNELS, width=cfg.csr.width,
                                             reduction=cfg.csr.reduction,
                                             spatial_kernel=cfg.csr.spatial_kernel,
                                             dtype=self.dtype)
        self.decoder = csr.init_decoder_params(s, rng, channels=CHANNELS, width=cfg.csr.width,
                                               scale=self.scale, dtype=self.dtype)
        self._apply_switches()

    # -- module switches -------------------------------------------------
    @property
    def use_fsd(self) -> bool:
        return self.config.model.use_fsd

    @property
    def use_sdr(self) -> bool:
        return self.config.model.use_sdr

    @property
    def use_csr(self) -> bool:
        return self.config.model.use_csr

    def frozen_names(self) -> list[str]:
        """Parameters pinned by the disabled modules."""
        names = []
        if not self.use_fsd:
            names += ["fsd.theta", "fsd.alpha_logits"]
        if not self.use_sdr:
            names += ["sdr.log_gamma", "sdr.sigma_raw", "sdr.beta_raw"]
            names += [n for n in self.store.names() if n.startswith("sdr.res")]
        if not self.use_csr:
            attn = {id(t) for t in self.fusion.attention_tensors()}
            names += [n for n, t in self.store.items() if id(t) in attn]
        return names

    def _apply_switches(self) -> None:
        if not self.use_fsd:
            self.lifting.theta.data = fsd.haar_theta(self.dtype)
            self.alpha.logits.data = np.zeros(4, dtype=self.dtype)
        if not self.use_sdr:
            for unit in self.stack.units:
                for t in (unit.w1, unit.b1, unit.w2, unit.b2):
                    t.data = np.zeros_like(t.data)
        if not self.use_csr:
            for t in self.fusion.attention_tensors():
                t.data = np.zeros_like(t.data)
        for name in self.frozen_names():
            self.store.set_learnable(name, False)

    @property
    def kl_active(self) -> bool:
        return self.use_fsd

    # -- forward ---------------------------------------------------------
    def run(self, x) -> ForwardTrace:
        """Forward pass keeping every intermediate.  ``x`` is H,W,3 or N,H,W,3 in [0, 1]."""
        x = nx.as_tensor(np.asarray(x.data if isinstance(x, Tensor) else x, dtype=self.dtype))
        if x.ndim not in (3, 4) or x.shape[-1] != CHANNELS:
            raise ValueError(f"model input must be H,W,3 or N,H,W,3, got shape {x.shape}")
        h, w = x.shape[-3], x.shape[-2]
        bands = fsd.decompose(x, self.lifting)
        rew = fsd.reweight(bands, self.alpha)
        lum, tex = fsd.split(rew)
        lum_e = sdr.naka_rushton(lum, self.nr) if self.use_sdr else lum
        tex_d = sdr.denoise(tex, self.stack)
        ftrace = csr.gated_fuse(lum_e, tex_d, self.fusion, trace=True)
        out = csr.rebuild_upsample(ftrace.fused, tex_d, self.decoder, self.scale)
        sh, sw = self.scale * h, self.scale * w
        if out.shape[-3] != sh:
            out = nx.take(out, range(sh), -3)
        if out.shape[-2] != sw:
            out = nx.take(out, range(sw), -2)
        return ForwardTrace(bands, rew, lum, tex, lum_e, tex_d, ftrace, out)

    def forward(self, x) -> Tensor:
        return self.run(x).output

    __call__ = forward

    def predict(self, x) -> np.ndarray:
        return self.forward(x).data

    # -- state -----------------------------------------------------------
    def astype(self, dtype) -> "DtpModel":
        self.dtype = np.dtype(dtype)
        self.store.astype(self.dtype)
        return self

    def perturb(self, rng: np.random.Generator, scale: float = 0.05) -> None:
        """Add Gaussian noise to every learnable tensor (moves zero-initialised weights off zero)."""
        for name in self.store.learnable_names():
            t = self.store[name]
            t.data = np.asarray(t.data + scale * rng.standard_normal(t.shape), dtype=self.dtype)

    def checkpoint_meta(self) -> dict:
        return {"config": self.config.to_dict(), "scale": self.scale}

    def save(self, path, extra: dict | None = None) -> None:
        meta = self.checkpoint_meta()
        meta.update(extra or {})
        self.store.save(path, meta)

    @classmethod
    def load(cls, path) -> tuple["DtpModel", dict]:
        store, meta = ParamStore.load(path)
        if "config" not in meta:
            raise nx.CheckpointError(f"{path} carries no model config")
        model = cls(DtpConfig.from_dict(meta["config"]), dtype=next(iter(store.tensors())).dtype)
        if set(store.names()) != set(model.store.names()):
            raise nx.CheckpointError(f"{path} does not match the model layout in its config")
        model.store.load_state(store.state())
        for name in store.names():
            model.store.set_learnable(name, store.is_learnable(name))
        return model, meta
