import numpy as np
import pytest

from mssplat.optim import Adam


def reference_adam(p, grads, lr, b1=0.9, b2=0.999, eps=1e-15):
    """Textbook scalar Adam, one element at a time."""
    p = float(p)
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return p


def test_matches_scalar_reference():
    rng = np.random.default_rng(0)
    p0 = rng.normal(size=(5, 3))
    gs = rng.normal(size=(20, 5, 3))
    opt = Adam({"w": 0.01})
    p = p0.copy()
    for g in gs:
        opt.step({"w": p}, {"w": g})
    for idx in np.ndindex(p.shape):
        assert p[idx] == pytest.approx(reference_adam(p0[idx], gs[:, idx[0], idx[1]], 0.01), abs=1e-12)


def test_first_step_moves_by_lr():
    p = np.array([[1.0], [2.0]])
    Adam({"w": 0.1}).step({"w": p}, {"w": np.array([[3.0], [-0.5]])})
    np.testing.assert_allclose(p, [[0.9], [2.1]], atol=1e-12)


def test_lr_scale_and_missing_gradient():
    p, q = np.zeros((2, 2)), np.zeros((2, 2))
    opt = Adam({"p": 1.0, "q": 1.0})
    opt.step({"p": p, "q": q}, {"p": np.ones((2, 2))}, lr_scale={"p": 0.25})
    np.testing.assert_allclose(p, -0.25)
    assert not q.any() and "q" not in opt.m


def test_new_rows_start_fresh_bias_correction():
    p = np.zeros((1, 1))
    opt = Adam({"w": 0.1})
    for _ in range(5):
        opt.step({"w": p}, {"w": np.ones((1, 1))})
    opt.append_zeros(1)
    p = np.concatenate([p, np.zeros((1, 1))])
    opt.step({"w": p}, {"w": np.ones((2, 1))})
    # the appended row behaves exactly like a first step
    assert p[1, 0] == pytest.approx(-0.1, abs=1e-12)
    assert opt.steps["w"].tolist() == [6, 1]


def test_select_keeps_rows():
    rng = np.random.default_rng(1)
    p = rng.normal(size=(4, 2))
    opt = Adam({"w": 0.01})
    opt.step({"w": p}, {"w": rng.normal(size=(4, 2))})
    m = opt.m["w"].copy()
    opt.select(np.array([True, False, True, False]))
    np.testing.assert_array_equal(opt.m["w"], m[[0, 2]])
    opt.select(np.array([1]))
    np.testing.assert_array_equal(opt.m["w"], m[[2]])


def test_state_round_trip_continues_identically():
    rng = np.random.default_rng(2)
    gs = rng.normal(size=(6, 3, 2))
    a = Adam({"w": 0.05})
    pa = np.zeros((3, 2))
    for g in gs[:3]:
        a.step({"w": pa}, {"w": g})
    b = Adam({"w": 0.05})
    b.load_state_arrays(a.state_arrays())
    pb = pa.copy()
    for g in gs[3:]:
        a.step({"w": pa}, {"w": g})
        b.step({"w": pb}, {"w": g})
    assert pa.tobytes() == pb.tobytes()


def test_float32_parameters_stay_float32():
    p = np.zeros((3, 3), np.float32)
    Adam({"w": 0.1}).step({"w": p}, {"w": np.ones((3, 3), np.float32)})
    assert p.dtype == np.float32 and np.allclose(p, -0.1)
