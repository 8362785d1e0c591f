import numpy as np
import pytest

from dtp import numerics as nx
from dtp import sdr
from dtp.numerics import ParamStore, Tensor


def nr_params(store, gamma=1.0, sigma=0.3, beta=0.05):
    lg, sr, br = sdr.NakaRushtonParams.raw_values(gamma, sigma, beta)
    return sdr.NakaRushtonParams(store.add("g", np.float64(lg)), store.add("s", np.float64(sr)),
                                 store.add("b", np.float64(br)))


def test_raw_values_map_back():
    p = nr_params(ParamStore(), 2.0, 0.5, 0.1)
    assert p.gamma().item() == pytest.approx(2.0, abs=1e-12)
    assert p.sigma().item() == pytest.approx(0.5, abs=1e-12)
    assert p.beta().item() == pytest.approx(0.1, abs=1e-12)


def test_all_zero_input_gives_zero():
    p = nr_params(ParamStore())
    out = sdr.naka_rushton(np.zeros((4, 4, 3)), p)
    np.testing.assert_array_equal(out.data, 0.0)
    out = sdr.naka_rushton_apply(np.zeros((4, 4, 3)), 1.0, 0.0, 0.0)
    np.testing.assert_array_equal(out.data, 0.0)


def test_constant_input_unit_gamma_no_threshold():
    c = 0.37
    out = sdr.naka_rushton_apply(np.full((3, 3, 3), c), 1.0, 0.0, 0.0)
    # r = 1, mu_in = c, mu_out = 1
    np.testing.assert_allclose(out.data, c / (1 + 1e-6), atol=1e-12)
    np.testing.assert_allclose(out.data, c, atol=1e-6)


def test_single_pixel_hand_arithmetic():
    x, g, s, b = 0.25, 2.0, 0.5, 0.1
    r = x ** g / (x ** g + s ** g + b)
    assert r == pytest.approx(0.0625 / 0.4125)
    assert sdr.naka_rushton_response(np.array(x), g, s, b).item() == pytest.approx(r, abs=1e-15)
    out = sdr.naka_rushton_apply(np.full((1, 1, 1), x), g, s, b).item()
    assert out == pytest.approx(x * r / (r + 1e-6), abs=1e-12)
    assert out == pytest.approx(0.25, abs=1e-5)


def test_response_monotone_random_params():
    rng = np.random.default_rng(0)
    xs = np.sort(rng.uniform(1e-3, 1.0, 200))
    xs = np.concatenate([xs, [1.0]])
    for _ in range(1000):
        g = rng.uniform(0.1, 5.0)
        s = rng.uniform(0.0, 2.0)
        b = rng.uniform(0.0, 1.0)
        if s ** g + b <= 0:
            continue
        r = sdr.naka_rushton_response(xs, g, s, b).data
        assert np.all(np.diff(r) > 0)
        assert np.all((r >= 0) & (r < 1))


def test_order_preserved_within_image():
    rng = np.random.default_rng(1)
    img = rng.uniform(0, 0.3, (6, 6, 1))
    out = sdr.naka_rushton_apply(img, 1.5, 0.4, 0.05).data
    assert out.max() < 1.0
    order = np.argsort(img.ravel(), kind="stable")
    assert np.all(np.diff(out.ravel()[order]) >= 0)


def test_output_in_unit_interval():
    rng = np.random.default_rng(2)
    img = rng.uniform(-0.2, 1.3, (5, 5, 3))
    out = sdr.naka_rushton_apply(img, 0.6, 0.05, 0.0).data
    assert out.min() >= 0 and out.max() <= 1


def test_per_channel_statistics():
    img = np.zeros((2, 2, 2))
    img[..., 0] = 0.2
    img[..., 1] = 0.6
    out = sdr.naka_rushton_apply(img, 1.0, 0.0, 0.0).data
    np.testing.assert_allclose(out[..., 0], 0.2 / (1 + 1e-6))
    np.testing.assert_allclose(out[..., 1], 0.6 / (1 + 1e-6))


def test_zero_stack_is_exact_identity():
    rng = np.random.default_rng(3)
    stack = sdr.ResidualStack.zeros(9, stages=4, width=16)
    t = rng.standard_normal((1, 5, 6, 9))
    out = sdr.denoise(t, stack)
    assert out.data.tobytes() == t.tobytes()


def test_pointwise_negative_half_residual():
    c = 3
    stack = sdr.ResidualStack.zeros(c, stages=1, width=2 * c)
    u = stack.units[0]
    for ch in range(c):
        u.w1.data[1, 1, ch, ch] = 1.0
        u.w1.data[1, 1, ch, c + ch] = -1.0
        # leaky(x) - leaky(-x) = 1.01 x
        u.w2.data[1, 1, ch, ch] = -0.5 / 1.01
        u.w2.data[1, 1, c + ch, ch] = 0.5 / 1.01
    rng = np.random.default_rng(4)
    t = rng.standard_normal((4, 4, c))
    np.testing.assert_allclose(sdr.denoise(t, stack).data, 0.5 * t, atol=1e-12)


def random_stack(rng, channels=9, stages=4, width=8):
    stack = sdr.ResidualStack.zeros(channels, stages, width)
    for u in stack.units:
        for t in (u.w1, u.b1, u.w2, u.b2):
            t.data = 0.2 * rng.standard_normal(t.shape)
    return stack


def test_depth_composition_exact():
    rng = np.random.default_rng(5)
    stack = random_stack(rng)
    t = rng.standard_normal((1, 4, 4, 9))
    full = sdr.denoise(t, stack).data
    for k in range(5):
        mid = sdr.denoise(t, stack, 0, k)
        parts = sdr.denoise(mid, stack, k).data
        assert parts.tobytes() == full.tobytes()


def test_channel_mismatch_rejected():
    stack = sdr.ResidualStack.zeros(9)
    with pytest.raises(ValueError):
        sdr.denoise(np.zeros((4, 4, 3)), stack)
    with pytest.raises(ValueError):
        sdr.ResidualStack([])


def test_gradients_naka_rushton_and_denoise():
    rng = np.random.default_rng(6)
    store = ParamStore()
    p = nr_params(store, 1.3, 0.3, 0.05)
    lum = store.add("lum", rng.uniform(0.05, 0.6, (1, 4, 4, 3)))
    stack = random_stack(rng, width=4, stages=2)
    for i, u in enumerate(stack.units):
        for n, t in zip(("w1", "b1", "w2", "b2"), (u.w1, u.b1, u.w2, u.b2)):
            store.add(f"u{i}.{n}", t.data)
            setattr(u, n, store[f"u{i}.{n}"])
    tex = store.add("tex", rng.standard_normal((1, 4, 4, 9)))
    w = rng.standard_normal((1, 4, 4, 3))
    w2 = rng.standard_normal((1, 4, 4, 9))

    def f():
        return (sdr.naka_rushton(lum, p) * w).sum() + (sdr.denoise(tex, stack) * w2).sum()

    rep = nx.finite_diff_check(f, store, step=1e-5, tol=1e-4)
    assert rep.passed, [line for line in rep.lines() if "FAIL" in line]
