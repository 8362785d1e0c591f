"""Module on/off grid: train each combination identically, score on held-out pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import metrics
from ..io_utils import atomic_write_text
from .config import DtpConfig
from .data import PairedSet
from .model import DtpModel
from .train import TrainResult, predict_set, train

# (fsd, sdr, csr): baseline, three single modules, three pairs, full model
GRID = [
    (False, False, False),
    (True, False, False),
    (False, True, False),
    (False, False, True),
    (True, True, False),
    (True, False, True),
    (False, True, True),
    (True, True, True),
]


@dataclass
class AblationRow:
    fsd: bool
    sdr: bool
    csr: bool
    psnr: float
    ssim: float
    delta_psnr: float = 0.0
    delta_ssim: float = 0.0
    frozen: list[str] = field(default_factory=list)
    frozen_max_abs_grad: float = 0.0
    frozen_unchanged: bool = True
    final_l1: float = float("nan")

    @property
    def label(self) -> str:
        on = [n for n, f in (("FSD", self.fsd), ("SDR", self.sdr), ("CSR", self.csr)) if f]
        return "+".join(on) if on else "baseline"


def _mark(flag: bool) -> str:
    return "x" if flag else "-"


def _signed(v: float, digits: int) -> str:
    s = f"{v:+.{digits}f}"
    return "+" + s[1:] if s.startswith("-") and float(s) == 0 else s


@dataclass
class AblationReport:
    scale: int
    rows: list[AblationRow] = field(default_factory=list)

    def baseline(self) -> AblationRow:
        return self.rows[0]

    def full(self) -> AblationRow:
        return self.rows[-1]

    def to_csv(self, delimiter: str = ",") -> str:
        head = ["scale", "fsd", "sdr", "csr", "psnr_db", "ssim", "lpips", "delta_psnr_db",
                "delta_ssim"]
        lines = [delimiter.join(head)]
        for r in self.rows:
            lines.append(delimiter.join([
                f"x{self.scale}", str(int(r.fsd)), str(int(r.sdr)), str(int(r.csr)),
                f"{r.psnr:.4f}", f"{r.ssim:.5f}", "n/a",
                _signed(r.delta_psnr, 2), _signed(r.delta_ssim, 3)]))
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        head = f"{'Scale':<6}{'FSD':^5}{'SDR':^5}{'CSR':^5}{'PSNR':>16}{'SSIM':>16}{'LPIPS':>8}"
        rule = "-" * len(head)
        out = [head, rule]
        for i, r in enumerate(self.rows):
            scale = f"x{self.scale}" if i == 0 else ""
            psnr = f"{r.psnr:.2f}" + ("" if i == 0 else f" ({_signed(r.delta_psnr, 2)})")
            ssim = f"{r.ssim:.3f}" + ("" if i == 0 else f" ({_signed(r.delta_ssim, 3)})")
            out.append(f"{scale:<6}{_mark(r.fsd):^5}{_mark(r.sdr):^5}{_mark(r.csr):^5}"
                       f"{psnr:>16}{ssim:>16}{'n/a':>8}")
            if i in (0, 3, 6):
                out.append(rule)
        out.append(rule)
        out.append("lpips: n/a (no pretrained perceptual network); deltas are against the "
                   "all-off row")
        return "\n".join(out) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        csv_path, txt_path = out_dir / "ablation.csv", out_dir / "ablation.txt"
        atomic_write_text(csv_path, self.to_csv())
        atomic_write_text(txt_path, self.to_table())
        return csv_path, txt_path


def evaluate(model: DtpModel, data: PairedSet) -> tuple[float, float]:
    pred = predict_set(model, data)
    rep = metrics.evaluate_pairs(zip(data.names, pred, data.hr))
    return rep.mean_psnr, rep.mean_ssim


def run_config(cfg: DtpConfig, flags, train_set: PairedSet, test_set: PairedSet,
               log: Callable[[str], None] | None = None) -> tuple[AblationRow, DtpModel, TrainResult]:
    cfg = cfg.copy()
    cfg.model.use_fsd, cfg.model.use_sdr, cfg.model.use_csr = flags
    model = DtpModel(cfg)
    frozen = model.frozen_names()
    pinned = {n: model.store[n].data.copy() for n in frozen}
    result = train(model, train_set, cfg.train)
    grads = [np.abs(model.store[n].grad).max() for n in frozen if model.store[n].grad is not None]
    unchanged = all(np.array_equal(model.store[n].data, v) for n, v in pinned.items())
    psnr, ssim = evaluate(model, test_set)
    row = AblationRow(*flags, psnr=psnr, ssim=ssim, frozen=frozen,
                      frozen_max_abs_grad=float(max(grads, default=0.0)),
                      frozen_unchanged=unchanged,
                      final_l1=result.final_l1 if result.trace else float("nan"))
    if log:
        log(f"{row.label:<12s} psnr={psnr:.3f} ssim={ssim:.4f} frozen={len(frozen)}")
    return row, model, result


def ablate(cfg: DtpConfig, train_set: PairedSet, test_set: PairedSet, grid=GRID,
           log: Callable[[str], None] | None = None) -> AblationReport:
    """Train every on/off combination with the same seeds and budget; deltas vs. the first row."""
    report = AblationReport(scale=cfg.csr.scale)
    for flags in grid:
        row, _, _ = run_config(cfg, flags, train_set, test_set, log)
        report.rows.append(row)
    base = report.rows[0]
    for r in report.rows:
        r.delta_psnr = r.psnr - base.psnr
        r.delta_ssim = r.ssim - base.ssim
    return report
