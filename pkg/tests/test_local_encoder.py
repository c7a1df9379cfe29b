import numpy as np
import pytest

from convrnnt import tensor as T
from convrnnt.errors import ConfigError
from convrnnt.local_encoder import LocalEncoder, LocalEncoderConfig

CFG = LocalEncoderConfig(channels=(6, 6, 4, 4), n_freq=8)


def make_encoder(seed=0, cfg=CFG):
    return LocalEncoder(cfg, np.random.default_rng(seed))


def run(enc, x):
    with T.no_grad():
        return enc(T.Tensor(x)).data


def test_zero_input_zero_output():
    enc = make_encoder()
    for t_len in (1, 3, 11):
        out = run(enc, np.zeros((t_len, CFG.input_dim)))
        assert out.shape == (t_len, CFG.output_dim)
        assert np.all(out == 0.0)


def test_single_frame_input():
    enc = make_encoder(1)
    out = run(enc, np.random.default_rng(2).standard_normal((1, CFG.input_dim)))
    assert out.shape == (1, CFG.output_dim)
    assert np.all(np.isfinite(out))


@pytest.mark.parametrize("t_len", [1, 2, 7, 20])
def test_time_length_preserved(t_len):
    enc = make_encoder(3)
    x = np.random.default_rng(t_len).standard_normal((t_len, CFG.input_dim))
    assert run(enc, x).shape[0] == t_len


def test_causality_bitwise():
    enc = make_encoder(4)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((12, CFG.input_dim))
    base = run(enc, x)
    t0 = 7
    x2 = x.copy()
    x2[t0] += rng.standard_normal(CFG.input_dim)
    pert = run(enc, x2)
    assert np.array_equal(base[:t0], pert[:t0])
    assert not np.array_equal(base[t0:], pert[t0:])


def test_receptive_field_is_17_frames():
    # Positive weights and zero biases keep every contribution alive through
    # the ReLUs, so the impulse response support is the exact reach.
    enc = make_encoder(6)
    for conv in enc.convs:
        conv.weight.data = np.abs(conv.weight.data) + 0.1
    t_len, t0 = 30, 5
    x = np.zeros((t_len, CFG.input_dim))
    x[t0] = 1.0
    out = run(enc, x)
    hot = np.where(np.abs(out).sum(axis=1) > 0)[0]
    assert hot[0] == t0
    assert hot[-1] == t0 + CFG.receptive_field - 1 == t0 + 16
    assert np.array_equal(hot, np.arange(t0, t0 + 17))


def test_gradient_flows_to_all_conv_params():
    cfg = LocalEncoderConfig(channels=(3, 2), kernel_t=3, kernel_f=3, n_freq=6)
    enc = LocalEncoder(cfg, np.random.default_rng(7))
    x = T.Tensor(np.random.default_rng(8).standard_normal((5, cfg.input_dim)), requires_grad=True)
    T.sum_all(enc(x)).backward()
    assert x.grad is not None
    for name, p in enc.params():
        assert p.grad is not None, name


def test_even_frequency_kernel_rejected():
    with pytest.raises(ConfigError):
        LocalEncoderConfig(channels=(4,), kernel_f=4, n_freq=8)


def test_kernel_wider_than_band_axis_rejected():
    with pytest.raises(ConfigError):
        LocalEncoderConfig(channels=(4,), kernel_f=5, n_freq=3)
