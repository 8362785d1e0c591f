"""``dtp`` command line: synth, train, infer, ablate, gradcheck, evaluate.

Errors are reported as one line starting with ``ERROR:`` on stderr and a
nonzero exit status.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import imageio, metrics, plotting
from .io_utils import atomic_write_text, worker_count, write_npz
from .numerics import CheckpointError
from .pipeline import DtpConfig, DtpModel, PairedSet, TrainingDiverged, train_test_sets
from .pipeline.ablation import ablate
from .pipeline.data import DegradationSpec, degrade, synth_hr
from .pipeline.gradsuite import group_summary, model_gradcheck
from .pipeline.train import train, write_trace


class CliError(Exception):
    pass


def _load_config(path) -> DtpConfig:
    return DtpConfig.load(path) if path else DtpConfig()


# -- synth ---------------------------------------------------------------
def cmd_synth(args) -> None:
    spec = DegradationSpec.from_ev(args.ev, gamma=args.gamma, noise=args.noise, scale=args.scale,
                                   seed=args.seed)
    if args.hr_dir:
        paths = imageio.list_images(args.hr_dir)
        if not paths:
            raise CliError(f"no .png/.ppm images in {args.hr_dir}")
        items = [(p.stem, imageio.read_image(p)) for p in paths]
    else:
        if args.size % args.scale:
            raise CliError(f"--size {args.size} is not divisible by --scale {args.scale}")
        rng = np.random.default_rng(args.seed)
        items = [(f"{i:04d}", synth_hr(rng, args.size)) for i in range(args.generate)]
    out = Path(args.out)
    rows = ["name,hr,lr"]
    for i, (name, hr) in enumerate(items):
        lr = degrade(hr, spec, stream=i)
        imageio.write_image(out / "hr" / f"{name}.png", hr, bits=16)
        imageio.write_image(out / "lr" / f"{name}.png", lr, bits=16)
        rows.append(f"{name},hr/{name}.png,lr/{name}.png")
    atomic_write_text(out / "pairs.csv", "\n".join(rows) + "\n")
    atomic_write_text(out / "degradation.txt",
                      f"exposure = {spec.exposure!r}\nev = {args.ev!r}\ngamma = {spec.gamma!r}\n"
                      f"noise = {spec.noise!r}\nscale = {spec.scale}\nseed = {spec.seed}\n")
    print(f"wrote {len(items)} pairs to {out}")


def load_pairs(data_dir) -> PairedSet:
    data_dir = Path(data_dir)
    lr_paths = imageio.list_images(data_dir / "lr")
    hr_dir = data_dir / "hr"
    if not lr_paths:
        raise CliError(f"no images in {data_dir / 'lr'}")
    lrs, hrs, names = [], [], []
    for p in lr_paths:
        match = [q for q in imageio.list_images(hr_dir) if q.stem == p.stem]
        if not match:
            raise CliError(f"no HR counterpart for {p.name} in {hr_dir}")
        lrs.append(imageio.read_image(p))
        hrs.append(imageio.read_image(match[0]))
        names.append(p.stem)
    if len({x.shape for x in lrs}) != 1 or len({x.shape for x in hrs}) != 1:
        raise CliError("all training pairs must share one LR size and one HR size")
    return PairedSet(np.stack(lrs), np.stack(hrs), names)


# -- train ---------------------------------------------------------------
def cmd_train(args) -> None:
    cfg = _load_config(args.config)
    data = load_pairs(args.data) if args.data else train_test_sets(cfg)[0]
    if data.scale != cfg.csr.scale:
        raise CliError(f"data scale x{data.scale} does not match csr.scale = {cfg.csr.scale}")
    out = Path(args.out)
    model = DtpModel(cfg)
    every = max(cfg.train.steps // 10, 1)

    def log(e):
        if e.step % every == 0 or e.step == cfg.train.steps - 1:
            print(f"step {e.step:5d}  total={e.total:.6f}  l1={e.l1:.6f}  kl={e.kl:.6f}",
                  flush=True)

    try:
        result = train(model, data, cfg.train, checkpoint=out / "model.ckpt", log=log)
    except TrainingDiverged as exc:
        raise CliError(str(exc)) from None
    write_trace(result, out / "loss.csv")
    atomic_write_text(out / "config.cfg", cfg.to_text())
    if result.trace:
        plotting.plot_loss(result.trace, out / "loss.png")
        print(f"l1 {result.initial_l1:.6f} -> {result.final_l1:.6f}")
    print(f"checkpoint: {out / 'model.ckpt'}")


# -- infer ---------------------------------------------------------------
def _band_image(t) -> np.ndarray:
    a = np.asarray(t.data)[0]
    lo, hi = a.min(), a.max()
    return (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)


def cmd_infer(args) -> None:
    model, _ = DtpModel.load(args.checkpoint)
    src = Path(getattr(args, "in"))
    if src.is_dir():
        inputs = imageio.list_images(src)
        if not inputs:
            raise CliError(f"no images in {src}")
        out_dir = Path(args.out)
        targets = [out_dir / f"{p.stem}.png" for p in inputs]
    else:
        inputs, targets = [src], [Path(args.out)]
    for p, target in zip(inputs, targets):
        img = imageio.read_image(p)
        trace = model.run(img[None])
        out = trace.output.data[0]
        imageio.write_image(target, out, bits=16 if args.bits16 else 8)
        print(f"{p} -> {target} {out.shape[1]}x{out.shape[0]}")
        if args.emit_subbands:
            stage_dir = target.parent / f"{target.stem}_stages"
            bands = dict(zip(("ll", "lh", "hl", "hh"), trace.subbands.bands()))
            tex = trace.tex_denoised.data[0]
            stages = {**{k: _band_image(v) for k, v in bands.items()},
                      "lum_enhanced": _band_image(trace.lum_enhanced),
                      "tex_denoised_lh": _band_image(trace.tex_denoised)[..., 0:3],
                      "tex_denoised_hl": _band_image(trace.tex_denoised)[..., 3:6],
                      "tex_denoised_hh": _band_image(trace.tex_denoised)[..., 6:9]}
            for k, v in stages.items():
                imageio.write_image(stage_dir / f"{k}.png", v)
            raw = {k: np.asarray(v.data)[0] for k, v in bands.items()}
            raw.update(lum_enhanced=trace.lum_enhanced.data[0], tex_denoised=tex,
                       gate=np.asarray(trace.fusion.gate.data).reshape(-1))
            write_npz(stage_dir / "stages.npz", raw)
            plotting.plot_panels({"input": img, "LL": stages["ll"], "LH": stages["lh"],
                                  "HL": stages["hl"], "HH": stages["hh"],
                                  "enhanced LL": stages["lum_enhanced"], "output": out},
                                 stage_dir / "panels.png")


# -- ablate --------------------------------------------------------------
def cmd_ablate(args) -> None:
    cfg = _load_config(args.config)
    train_set, test_set = train_test_sets(cfg)
    report = ablate(cfg, train_set, test_set, log=lambda s: print(s, flush=True))
    out = Path(args.out)
    report.write(out)
    plotting.plot_ablation(report, out / "ablation.png")
    frozen = [f"{r.label}: frozen={len(r.frozen)} max|grad|={r.frozen_max_abs_grad:g} "
              f"unchanged={r.frozen_unchanged}" for r in report.rows]
    atomic_write_text(out / "frozen.txt", "\n".join(frozen) + "\n")
    print(report.to_table(), end="")


# -- gradcheck -----------------------------------------------------------
def cmd_gradcheck(args) -> int:
    cfg = _load_config(args.config)
    report, _ = model_gradcheck(cfg)
    for line in report.lines()[:-1]:
        print(line)
    for group, err in group_summary(report).items():
        print(f"group {group:<16s} max_rel_err={err:.3e}")
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} max_rel_err={report.max_rel_err:.3e} tol={report.tol:.1e} "
          f"step={report.step:.1e}")
    return 0 if report.passed else 1


# -- evaluate ------------------------------------------------------------
def cmd_evaluate(args) -> None:
    preds = imageio.list_images(args.pred_dir)
    gts = {p.stem: p for p in imageio.list_images(args.gt_dir)}
    if not preds:
        raise CliError(f"no images in {args.pred_dir}")
    triples = []
    for p in preds:
        if p.stem not in gts:
            raise CliError(f"no ground truth for {p.name} in {args.gt_dir}")
        a, b = imageio.read_image(p), imageio.read_image(gts[p.stem])
        if a.shape != b.shape:
            raise CliError(f"shape mismatch for {p.stem}: {a.shape} vs {b.shape}")
        triples.append((p.stem, a, b))
    report = metrics.evaluate_pairs(triples, with_histograms=True,
                                    workers=worker_count(1))
    out = Path(args.out)
    atomic_write_text(out / "metrics.csv", report.to_csv())
    atomic_write_text(out / "metrics.txt", report.summary())
    for name, hist in report.histograms.items():
        atomic_write_text(out / "histograms" / f"{name}.csv", metrics.histograms_to_text(hist))
        plotting.plot_histograms(hist, out / "histograms" / f"{name}.png", title=name)
    print(report.summary(), end="")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtp", description="Low-light super-resolution toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write paired dark-LR / HR images")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--hr-dir", help="directory of well-lit HR images (.png/.ppm)")
    src.add_argument("--generate", type=int, metavar="N", help="generate N procedural HR scenes")
    s.add_argument("--size", type=int, default=32, help="HR size for --generate (default 32)")
    s.add_argument("--out", required=True, help="output directory (gets hr/ and lr/)")
    s.add_argument("--scale", type=int, choices=(2, 4), default=2, help="downsample factor")
    s.add_argument("--ev", type=float, default=-2.5, help="exposure in EV; factor 2**ev")
    s.add_argument("--gamma", type=float, default=1.2, help="gamma-darken exponent (>= 1)")
    s.add_argument("--noise", type=float, default=0.02, help="Gaussian noise std")
    s.add_argument("--seed", type=int, default=0, help="random seed")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    t.add_argument("--config", help="config file (default: built-in defaults)")
    t.add_argument("--data", help="directory with lr/ and hr/ (default: synthetic set "
                                  "from the data.* config keys)")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="run a checkpoint on an image or a directory")
    i.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    i.add_argument("--in", required=True, help="input image or directory")
    i.add_argument("--out", required=True, help="output image (or directory for directory input)")
    i.add_argument("--emit-subbands", action="store_true",
                   help="also write subbands and branch intermediates to <out>_stages/")
    i.add_argument("--bits16", action="store_true", help="write 16-bit PNG")
    i.set_defaults(func=cmd_infer)

    a = sub.add_parser("ablate", help="train the eight module on/off combinations")
    a.add_argument("--config", help="config file")
    a.add_argument("--out", required=True, help="output directory")
    a.set_defaults(func=cmd_ablate)

    g = sub.add_parser("gradcheck", help="finite-difference check of all parameter groups")
    g.add_argument("--config", help="config file")
    g.set_defaults(func=cmd_gradcheck)

    e = sub.add_parser("evaluate", help="PSNR / SSIM / histograms of predictions vs ground truth")
    e.add_argument("--pred-dir", required=True)
    e.add_argument("--gt-dir", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        status = args.func(args)
    except (CliError, ValueError, OSError, KeyError, CheckpointError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"ERROR: {msg}", file=sys.stderr)
        return 2
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
