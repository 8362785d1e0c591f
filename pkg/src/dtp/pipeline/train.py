"""Toy-scale training: L1 reconstruction plus a weighted KL prior on the LL band, Adam updates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import fsd
from .. import numerics as nx
from ..io_utils import atomic_write_text
from .config import TrainConfig
from .data import PairedSet, box_upsample
from .model import DtpModel


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, checkpoint=None):
        where = f"; last finite parameters kept in {checkpoint}" if checkpoint else ""
        super().__init__(f"non-finite loss at step {step}{where}")
        self.step = step
        self.checkpoint = checkpoint


@dataclass
class StepLog:
    step: int
    total: float
    l1: float
    kl: float


@dataclass
class TrainResult:
    trace: list[StepLog] = field(default_factory=list)
    checkpoint: Path | None = None

    @property
    def initial_l1(self) -> float:
        return self.trace[0].l1

    @property
    def final_l1(self) -> float:
        return self.trace[-1].l1

    def to_csv(self) -> str:
        rows = ["step,total,l1,kl"]
        rows += [f"{r.step},{r.total:.9g},{r.l1:.9g},{r.kl:.9g}" for r in self.trace]
        return "\n".join(rows) + "\n"


class Adam:
    """Adaptive-moment updates over the learnable tensors of a ParamStore."""

    def __init__(self, store: nx.ParamStore, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.store, self.lr, self.beta1, self.beta2, self.eps = store, lr, beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(store[n].data) for n in store.learnable_names()}
        self.v = {n: np.zeros_like(store[n].data) for n in store.learnable_names()}

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for n in self.m:
            t = self.store[n]
            g = t.grad
            self.m[n] = self.beta1 * self.m[n] + (1 - self.beta1) * g
            self.v[n] = self.beta2 * self.v[n] + (1 - self.beta2) * g * g
            upd = self.lr * (self.m[n] / c1) / (np.sqrt(self.v[n] / c2) + self.eps)
            t.data = np.asarray(t.data - upd, dtype=t.dtype)


def loss_terms(model: DtpModel, lr_batch, hr_batch, cfg: TrainConfig):
    """Returns (total, l1, kl) tensors; kl is a constant zero when the FSD module is off."""
    trace = model.run(lr_batch)
    l1 = nx.abs_(trace.output - hr_batch.astype(model.dtype)).mean()
    if model.kl_active and cfg.lambda_kl > 0:
        kl = fsd.kl_loss(trace.subbands.ll, model.prior)
        total = l1 * cfg.lambda_rec + kl * cfg.lambda_kl
    else:
        kl = nx.Tensor(np.zeros((), dtype=model.dtype))
        total = l1 * cfg.lambda_rec
    return total, l1, kl


def _crop(data: PairedSet, idx, patch: int, rng: np.random.Generator):
    lr, hr = data.lr[idx], data.hr[idx]
    h, w = lr.shape[1], lr.shape[2]
    if patch >= h and patch >= w:
        return lr, hr
    s = data.scale
    ph, pw = min(patch, h), min(patch, w)
    y = int(rng.integers(0, h - ph + 1))
    x = int(rng.integers(0, w - pw + 1))
    return (lr[:, y:y + ph, x:x + pw],
            hr[:, s * y:s * (y + ph), s * x:s * (x + pw)])


def train(model: DtpModel, data: PairedSet, cfg: TrainConfig, checkpoint=None,
          log: Callable[[StepLog], None] | None = None) -> TrainResult:
    """Run ``cfg.steps`` Adam steps on random batches of ``data``.

    Every step's loss is appended to the trace (and passed to ``log``).  A
    non-finite loss stops training: parameters are rolled back to the last
    step with a finite loss, written to ``checkpoint`` if one was given, and
    :class:`TrainingDiverged` is raised with the step index.
    """
    cfg.validate()
    if len(data) == 0:
        raise ValueError("training set is empty")
    if data.scale != model.scale:
        raise ValueError(f"data scale {data.scale} does not match model scale {model.scale}")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.store, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    result = TrainResult(checkpoint=Path(checkpoint) if checkpoint else None)
    batch = min(cfg.batch, len(data))
    last_good = None
    for step in range(cfg.steps):
        idx = np.sort(rng.choice(len(data), size=batch, replace=False))
        lr_b, hr_b = _crop(data, idx, cfg.patch, rng)
        total, l1, kl = loss_terms(model, lr_b, hr_b, cfg)
        if not math.isfinite(total.item()):
            if last_good is not None:
                model.store.load_state(last_good)
            if result.checkpoint:
                model.save(result.checkpoint, {"steps_completed": step})
            raise TrainingDiverged(step, result.checkpoint)
        entry = StepLog(step, total.item(), l1.item(), kl.item())
        result.trace.append(entry)
        if log:
            log(entry)
        last_good = model.store.state()
        nx.backward(total, model.store)
        opt.step()
    if result.checkpoint:
        model.save(result.checkpoint, {"steps_completed": cfg.steps})
    return result


def write_trace(result: TrainResult, path) -> None:
    atomic_write_text(path, result.to_csv())


def predict_set(model: DtpModel, data: PairedSet, batch: int = 8) -> np.ndarray:
    outs = [model.predict(data.lr[i:i + batch]) for i in range(0, len(data), batch)]
    return np.concatenate(outs).astype(np.float32)


def baseline_predictions(data: PairedSet) -> np.ndarray:
    """Box (pixel-replication) upsampling of the dark LR input."""
    return np.stack([box_upsample(x, data.scale) for x in data.lr])
