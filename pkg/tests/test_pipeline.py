import importlib
import math

import numpy as np
import pytest

from dtp import fsd
from dtp import numerics as nx
from dtp.pipeline import (ConfigError, DegradationSpec, DtpConfig, DtpModel, TrainingDiverged,
                          degrade, loss_terms, synthetic_pairs, train, train_test_sets)
from dtp.pipeline.ablation import GRID, AblationReport, AblationRow, ablate
from dtp.pipeline.data import box_downsample, box_upsample
from dtp.pipeline.train import baseline_predictions, predict_set


def tiny_cfg(steps=3, **overrides):
    cfg = DtpConfig()
    cfg.train.steps = steps
    cfg.train.batch = 4
    cfg.data.n_train = 8
    cfg.data.n_test = 2
    for k, v in overrides.items():
        cfg.set(k, v)
    return cfg


# -- config -------------------------------------------------------------------

def test_config_text_round_trip():
    cfg = DtpConfig()
    cfg.set("train.lr", 3e-4)
    cfg.set("model.use_csr", "false")
    back = DtpConfig.from_text(cfg.to_text())
    assert back.to_dict() == cfg.to_dict()
    assert back.model.use_csr is False and back.train.lr == 3e-4


def test_config_comments_and_blank_lines():
    cfg = DtpConfig.from_text("# header\n\ntrain.steps = 5   # inline\ncsr.scale=4\n")
    assert cfg.train.steps == 5 and cfg.csr.scale == 4


@pytest.mark.parametrize("text,fragment", [
    ("train.nope = 1\n", "unknown config key"),
    ("train.steps = many\n", "train.steps"),
    ("just words\n", "expected 'key = value'"),
    ("train.lambda_rec = 0\n", "lambda_rec"),
    ("train.lambda_kl = -1\n", "lambda_kl"),
    ("csr.scale = 3\n", "scale"),
])
def test_config_errors_name_the_problem(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        DtpConfig.from_text("# ok\n" + text, "my.cfg")


def test_config_error_reports_line_number():
    with pytest.raises(ConfigError, match=r"my\.cfg:3"):
        DtpConfig.from_text("train.steps = 1\n\nbogus.key = 2\n", "my.cfg")


def test_config_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        DtpConfig.load(tmp_path / "absent.cfg")


def test_repo_default_config_matches_code_defaults():
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "configs" / "default.cfg"
    assert DtpConfig.load(path).to_dict() == DtpConfig().to_dict()


# -- degradation --------------------------------------------------------------

def test_degrade_identity_spec_gives_block_means():
    rng = np.random.default_rng(0)
    blocks = rng.random((4, 5, 3))
    hr = box_upsample(blocks, 2)
    out = degrade(hr, DegradationSpec(exposure=1, gamma=1, noise=0, scale=2))
    np.testing.assert_allclose(out, blocks, atol=1e-7)
    general = rng.random((8, 6, 3))
    np.testing.assert_allclose(degrade(general, DegradationSpec()),
                               general.reshape(4, 2, 3, 2, 3).mean(axis=(1, 3)), atol=1e-7)


def test_degrade_exposure_scales_constant():
    out = degrade(np.full((8, 8, 3), 0.8), DegradationSpec(exposure=0.25, scale=2))
    assert out.shape == (4, 4, 3)
    np.testing.assert_allclose(out, 0.2, atol=1e-7)


def test_degrade_noise_is_seeded():
    hr = np.random.default_rng(1).random((16, 16, 3))
    spec = DegradationSpec(exposure=0.5, noise=0.05, seed=9)
    a, b = degrade(hr, spec), degrade(hr, spec)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, degrade(hr, DegradationSpec(exposure=0.5, noise=0.05, seed=10)))
    assert not np.array_equal(a, degrade(hr, spec, stream=1))


def test_degrade_rejects_non_divisible_dims():
    with pytest.raises(ValueError, match="not divisible"):
        degrade(np.zeros((9, 8, 3)), DegradationSpec(scale=2))
    with pytest.raises(ValueError):
        box_downsample(np.zeros((8, 10, 3)), 4)


@pytest.mark.parametrize("kw", [dict(exposure=0.0), dict(exposure=1.5), dict(gamma=0.9),
                                dict(noise=-0.1), dict(scale=3)])
def test_degradation_spec_validation(kw):
    with pytest.raises(ValueError):
        DegradationSpec(**kw)


def test_from_ev_is_log2_exposure():
    assert DegradationSpec.from_ev(-1).exposure == 0.5
    assert math.isclose(DegradationSpec.from_ev(-2.5).exposure, 2 ** -2.5)


def test_synthetic_pairs_shapes_and_determinism():
    spec = DegradationSpec.from_ev(-2.5, gamma=1.2, noise=0.02, seed=3)
    a = synthetic_pairs(4, 16, spec, seed=0)
    b = synthetic_pairs(4, 16, spec, seed=0)
    assert a.lr.shape == (4, 16, 16, 3) and a.hr.shape == (4, 32, 32, 3) and a.scale == 2
    assert np.array_equal(a.lr, b.lr) and np.array_equal(a.hr, b.hr)
    assert a.lr.mean() < 0.5 * a.hr.mean()  # darkened


def test_train_and_test_sets_are_disjoint():
    tr, te = train_test_sets(tiny_cfg())
    assert len(tr) == 8 and len(te) == 2
    assert not any(np.array_equal(t, h) for t in te.hr for h in tr.hr)


# -- model ----------------------------------------------------------------------

def test_fresh_model_shape_and_range():
    model = DtpModel()
    x = np.random.default_rng(0).random((16, 16, 3))
    y = model.predict(x)
    assert y.shape == (32, 32, 3)
    assert np.isfinite(y).all() and y.min() >= 0 and y.max() <= 1


@pytest.mark.parametrize("scale,hw", [(2, (6, 10)), (4, (8, 8)), (2, (7, 9))])
def test_model_output_is_scale_times_input(scale, hw):
    cfg = DtpConfig()
    cfg.csr.scale = scale
    y = DtpModel(cfg).predict(np.full(hw + (3,), 0.2))
    assert y.shape == (scale * hw[0], scale * hw[1], 3)


def test_model_rejects_wrong_channel_count():
    with pytest.raises(ValueError, match="H,W,3"):
        DtpModel().predict(np.zeros((8, 8, 4)))


def _centre_taps_only(t):
    kh, kw = t.shape[0], t.shape[1]
    keep = np.zeros_like(t.data)
    keep[kh // 2, kw // 2] = t.data[kh // 2, kw // 2]
    t.data = keep


def test_constant_image_gives_constant_output():
    model = DtpModel()
    for unit in model.stack.units:
        for t in (unit.w1, unit.b1, unit.w2, unit.b2):
            t.data = np.zeros_like(t.data)
    model.fusion.gate_b.data = np.full_like(model.fusion.gate_b.data, 40.0)  # gate saturated at 1
    for name, t in model.store.items():
        if t.ndim == 4 and t.shape[0] > 1:
            _centre_taps_only(t)  # pointwise ("identity-style") spatial footprint
    for w, b in zip(model.decoder.up_w, model.decoder.up_b):
        # every sub-pixel position gets the same weights, so channel-to-space only replicates
        cf = w.shape[2]
        w.data = np.tile(w.data[..., :cf], (1, 1, 1, 4))
        b.data = np.tile(b.data[:cf], 4)
    tr = model.run(np.full((12, 12, 3), 0.3))
    for band in (tr.subbands.lh, tr.subbands.hl, tr.subbands.hh):
        assert np.abs(band.data).max() < 1e-7
    assert np.abs(tr.tex_denoised.data).max() < 1e-7
    assert float(tr.fusion.gate.data.min()) == 1.0
    out = tr.output.data
    spread = out.reshape(-1, 3).max(axis=0) - out.reshape(-1, 3).min(axis=0)
    assert spread.max() < 1e-6


def test_forward_is_deterministic_and_seeded():
    x = np.random.default_rng(2).random((1, 8, 8, 3))
    a, b = DtpModel().predict(x), DtpModel().predict(x)
    assert np.array_equal(a, b)
    cfg = DtpConfig()
    cfg.model.seed = 8
    assert not np.array_equal(a, DtpModel(cfg).predict(x))


def test_batch_and_single_image_agree():
    model = DtpModel()
    x = np.random.default_rng(3).random((2, 8, 8, 3))
    batched = model.predict(x)
    np.testing.assert_allclose(batched[1], model.predict(x[1]), atol=1e-6)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    cfg = DtpConfig()
    cfg.model.use_sdr = False
    model = DtpModel(cfg)
    model.perturb(np.random.default_rng(0))
    x = np.random.default_rng(1).random((1, 8, 8, 3))
    before = model.predict(x)
    model.save(tmp_path / "m.ckpt", {"note": "hi"})
    loaded, meta = DtpModel.load(tmp_path / "m.ckpt")
    assert meta["note"] == "hi" and loaded.use_sdr is False
    assert loaded.frozen_names() == model.frozen_names()
    assert np.array_equal(loaded.predict(x), before)
    for name in model.store.names():
        assert np.array_equal(loaded.store[name].data, model.store[name].data)
        assert loaded.store.is_learnable(name) == model.store.is_learnable(name)


def test_checkpoint_layout_mismatch_is_rejected(tmp_path):
    store = nx.ParamStore()
    store.add("fsd.theta", np.zeros(4))
    store.save(tmp_path / "bad.ckpt", {"config": DtpConfig().to_dict()})
    with pytest.raises(nx.CheckpointError):
        DtpModel.load(tmp_path / "bad.ckpt")


@pytest.mark.parametrize("flags", GRID)
def test_switches_freeze_exactly_the_disabled_modules(flags):
    cfg = DtpConfig()
    cfg.model.use_fsd, cfg.model.use_sdr, cfg.model.use_csr = flags
    model = DtpModel(cfg)
    frozen = set(model.frozen_names())
    assert frozen == {n for n in model.store.names() if not model.store.is_learnable(n)}
    assert any(n.startswith("fsd.") for n in frozen) == (not flags[0])
    assert any(n.startswith("sdr.") for n in frozen) == (not flags[1])
    assert any(n.startswith("csr.") for n in frozen) == (not flags[2])
    assert not any(n.startswith("dec.") for n in frozen)
    assert model.kl_active == flags[0]


def test_csr_off_gives_half_gate_and_uniform_masks():
    cfg = DtpConfig()
    cfg.model.use_csr = False
    tr = DtpModel(cfg).run(np.random.default_rng(0).random((8, 8, 3)))
    np.testing.assert_array_equal(tr.fusion.gate.data, 0.5)
    feats = tr.fusion.features.data
    np.testing.assert_allclose(tr.fusion.channel.data, 0.5 * feats, atol=1e-7)
    np.testing.assert_allclose(tr.fusion.spatial.data, 0.5 * feats, atol=1e-7)


def test_sdr_off_passes_luminance_through():
    cfg = DtpConfig()
    cfg.model.use_sdr = False
    tr = DtpModel(cfg).run(np.random.default_rng(0).random((8, 8, 3)))
    assert np.array_equal(tr.lum_enhanced.data, tr.lum.data)
    assert np.array_equal(tr.tex_denoised.data, tr.tex.data)


# -- training -----------------------------------------------------------------

def test_loss_is_sum_of_weighted_parts():
    cfg = tiny_cfg()
    cfg.train.lambda_rec, cfg.train.lambda_kl = 0.7, 0.3
    model = DtpModel(cfg)
    tr, _ = train_test_sets(cfg)
    total, l1, kl = loss_terms(model, tr.lr[:2], tr.hr[:2], cfg.train)
    assert kl.item() > 0
    assert abs(total.item() - (0.7 * l1.item() + 0.3 * kl.item())) < 1e-6
    out = model.predict(tr.lr[:2])
    assert abs(l1.item() - np.abs(out - tr.hr[:2]).mean()) < 1e-6
    ll = model.run(tr.lr[:2]).subbands.ll
    assert abs(kl.item() - fsd.kl_loss(ll, model.prior).item()) < 1e-7


def test_fsd_off_drops_the_kl_term():
    cfg = tiny_cfg(**{"model.use_fsd": False})
    tr, _ = train_test_sets(cfg)
    total, l1, kl = loss_terms(DtpModel(cfg), tr.lr[:2], tr.hr[:2], cfg.train)
    assert kl.item() == 0 and total.item() == l1.item()


def test_zero_learning_rate_leaves_parameters_bit_identical():
    cfg = tiny_cfg(steps=3)
    cfg.train.lr = 0.0
    model = DtpModel(cfg)
    before = model.store.state()
    tr, _ = train_test_sets(cfg)
    res = train(model, tr, cfg.train)
    assert len(res.trace) == 3
    for name, v in before.items():
        assert np.array_equal(model.store[name].data, v)


def test_same_seed_same_trace_and_weights(tmp_path):
    cfg = tiny_cfg(steps=4)
    tr, _ = train_test_sets(cfg)
    runs = []
    for i in range(2):
        model = DtpModel(cfg)
        res = train(model, tr, cfg.train, checkpoint=tmp_path / f"{i}.ckpt")
        runs.append((res.to_csv(), (tmp_path / f"{i}.ckpt").read_bytes()))
    assert runs[0] == runs[1]
    assert runs[0][0].splitlines()[0] == "step,total,l1,kl"


def test_training_steps_are_logged_and_checkpoint_written(tmp_path):
    cfg = tiny_cfg(steps=5)
    tr, _ = train_test_sets(cfg)
    seen = []
    res = train(DtpModel(cfg), tr, cfg.train, checkpoint=tmp_path / "m.ckpt", log=seen.append)
    assert [s.step for s in seen] == list(range(5)) == [s.step for s in res.trace]
    _, meta = DtpModel.load(tmp_path / "m.ckpt")
    assert meta["steps_completed"] == 5


def test_frozen_parameters_get_zero_gradient_and_do_not_move():
    cfg = tiny_cfg(steps=2, **{"model.use_fsd": False, "model.use_sdr": False,
                              "model.use_csr": False})
    model = DtpModel(cfg)
    pinned = {n: model.store[n].data.copy() for n in model.frozen_names()}
    tr, _ = train_test_sets(cfg)
    train(model, tr, cfg.train)
    for name, v in pinned.items():
        assert np.array_equal(model.store[name].data, v), name
        assert not np.any(model.store[name].grad), name


def test_nan_loss_aborts_with_step_and_keeps_last_finite_state(tmp_path, monkeypatch):
    cfg = tiny_cfg(steps=6)
    tr, _ = train_test_sets(cfg)
    model = DtpModel(cfg)
    tmod = importlib.import_module("dtp.pipeline.train")  # the package re-exports a function of that name
    real = tmod.loss_terms
    calls = {"n": 0}
    snapshots = []

    def poisoned(m, lr_b, hr_b, c):
        calls["n"] += 1
        snapshots.append(m.store.state())
        if calls["n"] == 4:
            lr_b = np.full_like(lr_b, np.nan)
        return real(m, lr_b, hr_b, c)

    monkeypatch.setattr(tmod, "loss_terms", poisoned)
    with pytest.raises(TrainingDiverged, match="step 3") as info:
        train(model, tr, cfg.train, checkpoint=tmp_path / "last.ckpt")
    assert info.value.step == 3
    loaded, meta = DtpModel.load(tmp_path / "last.ckpt")
    assert meta["steps_completed"] == 3
    # parameters are those with which step 2 produced a finite loss
    for name, v in snapshots[2].items():
        assert np.array_equal(loaded.store[name].data, v)
        assert np.isfinite(loaded.store[name].data).all()


def test_train_rejects_mismatched_scale():
    cfg = tiny_cfg()
    tr, _ = train_test_sets(cfg)
    cfg4 = tiny_cfg()
    cfg4.csr.scale = 4
    with pytest.raises(ValueError, match="scale"):
        train(DtpModel(cfg4), tr, cfg.train)


def test_baseline_and_predictions_shapes():
    cfg = tiny_cfg()
    _, te = train_test_sets(cfg)
    base = baseline_predictions(te)
    assert base.shape == te.hr.shape
    assert np.array_equal(base[0, ::2, ::2], te.lr[0])
    assert predict_set(DtpModel(cfg), te, batch=1).shape == te.hr.shape


def test_zero_kl_weight_training_halves_l1():
    cfg = DtpConfig()
    cfg.train.lambda_kl = 0.0
    tr, _ = train_test_sets(cfg)
    model = DtpModel(cfg)
    before = np.abs(predict_set(model, tr) - tr.hr).mean()
    res = train(model, tr, cfg.train)
    after = np.abs(predict_set(model, tr) - tr.hr).mean()
    assert len(res.trace) == 200
    assert after < 0.5 * before, (before, after)


# -- ablation report ------------------------------------------------------------

def _fake_report():
    rows = [AblationRow(*f, psnr=20.0 + i * 0.5, ssim=0.5 + i * 0.01) for i, f in enumerate(GRID)]
    rep = AblationReport(2, rows)
    for r in rows:
        r.delta_psnr, r.delta_ssim = r.psnr - rows[0].psnr, r.ssim - rows[0].ssim
    return rep


def test_ablation_grid_order():
    assert GRID[0] == (False, False, False) and GRID[-1] == (True, True, True)
    assert [sum(f) for f in GRID] == [0, 1, 1, 1, 2, 2, 2, 3]
    assert len(set(GRID)) == 8


def test_ablation_csv_format():
    lines = _fake_report().to_csv().splitlines()
    assert lines[0] == "scale,fsd,sdr,csr,psnr_db,ssim,lpips,delta_psnr_db,delta_ssim"
    assert lines[1] == "x2,0,0,0,20.0000,0.50000,n/a,+0.00,+0.000"
    assert lines[-1] == "x2,1,1,1,23.5000,0.57000,n/a,+3.50,+0.070"
    assert len(lines) == 9


def test_ablation_table_layout():
    table = _fake_report().to_table().splitlines()
    rules = [i for i, line in enumerate(table) if set(line) == {"-"}]
    # header rule, then one after the baseline, the singles, the pairs and the full row
    assert rules == [1, 3, 7, 11, 13]
    assert "20.00" in table[2] and "(" not in table[2]
    assert "(+3.50)" in table[12] and "(+0.070)" in table[12]
    assert "n/a" in table[-1]


def test_negative_zero_delta_prints_as_plus():
    rep = _fake_report()
    rep.rows[1].delta_psnr = -1e-9
    assert rep.to_csv().splitlines()[2].split(",")[7] == "+0.00"


def test_ablate_small_grid(tmp_path):
    cfg = tiny_cfg(steps=2)
    tr, te = train_test_sets(cfg)
    grid = [GRID[0], GRID[-1]]
    rep = ablate(cfg, tr, te, grid=grid)
    assert [r.label for r in rep.rows] == ["baseline", "FSD+SDR+CSR"]
    assert rep.rows[0].delta_psnr == 0.0 and rep.rows[0].delta_ssim == 0.0
    assert rep.rows[0].frozen and rep.rows[0].frozen_max_abs_grad == 0.0
    assert rep.rows[0].frozen_unchanged
    assert rep.rows[1].frozen == []
    csv_path, txt_path = rep.write(tmp_path)
    assert csv_path.read_text() == rep.to_csv()
