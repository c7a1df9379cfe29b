import numpy as np
import pytest

from convrnnt.config import OptimizerConfig
from convrnnt.errors import ConfigError
from convrnnt.optim import Adam, lr_at
from convrnnt.tensor import Tensor


def test_schedule_pins():
    sched = OptimizerConfig()  # peak 0.002, warmup 10000
    assert lr_at(10_000, sched) == 0.002
    assert lr_at(5_000, sched) == 0.001
    assert lr_at(40_000, sched) == 0.001


def test_schedule_shape():
    sched = OptimizerConfig()
    assert lr_at(1, sched) == 0.002 / 10_000
    assert lr_at(2_500, sched) == pytest.approx(0.0005)
    assert lr_at(9_999, sched) < 0.002 < lr_at(10_000, sched) + 1e-18
    # decay is monotone after the peak
    values = [lr_at(s, sched) for s in range(10_000, 50_000, 1_000)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_schedule_rejects_step_zero():
    with pytest.raises(ConfigError):
        lr_at(0, OptimizerConfig())


def test_adam_minimizes_quadratic():
    p = Tensor(np.array([5.0, -3.0]), requires_grad=True)
    opt = Adam([("p", p)], OptimizerConfig(l2=0.0))
    for _ in range(400):
        p.zero_grad()
        p.grad = 2.0 * p.data
        opt.step(0.05)
    assert np.max(np.abs(p.data)) < 1e-3


def test_l2_injection_is_exactly_2_lambda_w():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(16)
    p = Tensor(w.copy(), requires_grad=True)
    opt = Adam([("p", p)], OptimizerConfig(l2=1e-6))
    p.grad = np.zeros_like(w)
    opt.step(0.0)  # lr 0: parameters untouched, moments expose the gradient
    assert np.array_equal(opt.m["p"], (1.0 - 0.9) * (2.0 * 1e-6 * w))


def test_l2_zero_vs_nonzero_gradient_difference():
    rng = np.random.default_rng(1)
    w = rng.standard_normal(8)
    g = rng.standard_normal(8)
    moments = {}
    for l2 in (0.0, 1e-6):
        p = Tensor(w.copy(), requires_grad=True)
        opt = Adam([("p", p)], OptimizerConfig(l2=l2))
        p.grad = g.copy()
        opt.step(0.0)
        moments[l2] = opt.m["p"] / (1.0 - 0.9)
    assert np.allclose(moments[1e-6] - moments[0.0], 2.0 * 1e-6 * w, rtol=0, atol=1e-18)


def test_adam_state_roundtrip():
    p = Tensor(np.ones(3), requires_grad=True)
    opt = Adam([("p", p)], OptimizerConfig())
    p.grad = np.ones(3)
    opt.step(0.001)
    arrays = dict(opt.state_arrays())
    opt2 = Adam([("p", p)], OptimizerConfig())
    opt2.load_state_arrays(arrays)
    assert opt2.t == opt.t
    assert np.array_equal(opt2.m["p"], opt.m["p"])
    assert np.array_equal(opt2.v["p"], opt.v["p"])
