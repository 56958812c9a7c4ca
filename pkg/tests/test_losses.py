import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mssplat.errors import ContractError, InvalidInputError
from mssplat.losses import C1, C2, base_loss, l1_image_loss, psnr, ssim, total_loss


def rand_pair(seed, shape=(16, 16, 3)):
    rng = np.random.default_rng(seed)
    return rng.uniform(size=shape), rng.uniform(size=shape)


def test_l1_basics():
    a, b = rand_pair(0)
    assert l1_image_loss(a, a)[0] == 0
    assert l1_image_loss(a, a + 0.25)[0] == pytest.approx(0.25)
    loss, grad = l1_image_loss(a, b)
    brute = sum(abs(x - y) for x, y in zip(a.ravel(), b.ravel())) / a.size
    assert loss == pytest.approx(brute, rel=1e-12)
    np.testing.assert_array_equal(grad, np.sign(a - b) / a.size)
    with pytest.raises(ContractError):
        l1_image_loss(a, b[:8])


def reference_ssim(a, b):
    """Windowed SSIM by explicit window loops (per channel, valid placement)."""
    x = np.arange(11) - 5
    g = np.exp(-(x**2) / (2 * 1.5**2))
    w = np.outer(g, g) / g.sum() ** 2
    h, wd, c = a.shape
    vals = []
    for ch in range(c):
        for i in range(h - 10):
            for j in range(wd - 10):
                pa, pb = a[i:i + 11, j:j + 11, ch], b[i:i + 11, j:j + 11, ch]
                ma, mb = (w * pa).sum(), (w * pb).sum()
                va = (w * pa * pa).sum() - ma**2
                vb = (w * pb * pb).sum() - mb**2
                cv = (w * pa * pb).sum() - ma * mb
                vals.append((2 * ma * mb + C1) * (2 * cv + C2) / ((ma**2 + mb**2 + C1) * (va + vb + C2)))
    return np.mean(vals)


def test_ssim_matches_window_loop():
    a, b = rand_pair(1, (14, 15, 2))
    assert ssim(a, b)[0] == pytest.approx(reference_ssim(a, b), abs=1e-12)


def test_ssim_self_is_one():
    a, _ = rand_pair(2)
    assert ssim(a, a)[0] == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_images_closed_form():
    a = np.zeros((12, 12, 3))
    b = np.ones((12, 12, 3))
    expected = C1 / (1 + C1)  # mu_a = 0, mu_b = 1, no variance
    value = ssim(a, b)[0]
    assert value == pytest.approx(expected, rel=1e-9)
    assert value < 0.01


def test_ssim_too_small():
    with pytest.raises(InvalidInputError):
        ssim(np.zeros((10, 20, 3)), np.zeros((10, 20, 3)))


def test_ssim_grayscale():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(size=(12, 12)), rng.uniform(size=(12, 12))
    v, g = ssim(a, b)
    assert g.shape == (12, 12)
    assert v == pytest.approx(ssim(a[..., None], b[..., None])[0])


def test_ssim_gradient_finite_differences():
    a, b = rand_pair(3)
    _, grad = ssim(a, b)
    eps = 1e-6
    rng = np.random.default_rng(0)
    for _ in range(60):
        idx = tuple(int(rng.integers(s)) for s in a.shape)
        old = a[idx]
        a[idx] = old + eps
        hi = ssim(a, b)[0]
        a[idx] = old - eps
        lo = ssim(a, b)[0]
        a[idx] = old
        assert abs((hi - lo) / (2 * eps) - grad[idx]) < 1e-5


@given(st.integers(0, 10_000))
def test_ssim_symmetric_value(seed):
    a, b = rand_pair(seed, (12, 13, 3))
    assert abs(ssim(a, b)[0] - ssim(b, a)[0]) < 1e-9


def test_base_loss_cases():
    a, b = rand_pair(4)
    assert base_loss(a, a, 0.2)[0] == pytest.approx(0.0, abs=1e-12)
    l1, g1 = l1_image_loss(a, b)
    loss0, grad0, *_ = base_loss(a, b, 0.0)
    assert loss0 == l1
    np.testing.assert_array_equal(grad0, g1)
    loss, grad, l1_, dssim = base_loss(a, b, 0.2)
    s, gs = ssim(a, b)
    assert loss == pytest.approx(0.8 * l1 + 0.2 * (1 - s), abs=1e-15)
    assert (l1_, dssim) == (l1, pytest.approx(1 - s))
    np.testing.assert_allclose(grad, 0.8 * g1 - 0.2 * gs, atol=1e-15)
    with pytest.raises(InvalidInputError):
        base_loss(a, b, 1.5)


def test_base_loss_gradient_finite_differences():
    a, b = rand_pair(5)
    _, grad, *_ = base_loss(a, b, 0.2)
    eps = 1e-6
    rng = np.random.default_rng(1)
    for _ in range(30):
        idx = tuple(int(rng.integers(s)) for s in a.shape)
        if abs(a[idx] - b[idx]) < 1e-3:
            continue
        old = a[idx]
        a[idx] = old + eps
        hi = base_loss(a, b, 0.2)[0]
        a[idx] = old - eps
        lo = base_loss(a, b, 0.2)[0]
        a[idx] = old
        assert abs((hi - lo) / (2 * eps) - grad[idx]) < 1e-6


def test_total_loss_arithmetic():
    assert total_loss(1.0, 2.0, 3.0, 0.1, 0.01).total == pytest.approx(1.23, abs=1e-12)
    assert total_loss(0.7, 5.0, 9.0, 0.0, 0.0).total == 0.7
    with pytest.raises(InvalidInputError):
        total_loss(1, 1, 1, -0.1, 0)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 100), st.floats(0, 1), st.floats(0, 1))
def test_total_loss_recomposes(base, mss, size, lm, ls):
    b = total_loss(base, mss, size, lm, ls)
    assert abs(b.total - (b.base + lm * b.mss + ls * b.size)) <= 1e-9
    # linear in each term
    b2 = total_loss(base, 2 * mss, size, lm, ls)
    assert b2.total - b.total == pytest.approx(lm * mss, abs=1e-9)


def test_psnr():
    a, b = rand_pair(6)
    assert psnr(a, a) == 100.0
    assert psnr(np.zeros((4, 4, 3)), np.full((4, 4, 3), 0.1)) == pytest.approx(20.0)
    mse = sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / a.size
    assert psnr(a, b) == pytest.approx(10 * np.log10(1 / mse), rel=1e-12)
    with pytest.raises(ContractError):
        psnr(a, b[:3])


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(7)
    a = rng.uniform(size=(16, 16, 3))
    noise = rng.uniform(-1, 1, size=a.shape)
    values = [psnr(a, a + amp * noise) for amp in (0.01, 0.02, 0.05, 0.1, 0.3)]
    assert all(x > y for x, y in zip(values, values[1:]))
