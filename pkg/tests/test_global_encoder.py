import numpy as np
import pytest

from convrnnt import tensor as T
from convrnnt.global_encoder import (
    GlobalBlock,
    GlobalEncoder,
    GlobalEncoderConfig,
    causal_prefix_mean,
    squeeze_excite,
)
from convrnnt.layers import Linear

from oracles import prefix_mean_naive

D = 16
CFG = GlobalEncoderConfig(d_model=D)


def zero_params(obj):
    for _, p in obj.params():
        p.data[...] = 0.0


def positive_conv_weights(block):
    for name, p in block.params():
        if name.endswith("weight") and "se_" not in name:
            p.data = np.abs(p.data) + 0.1
        elif name.endswith("bias"):
            p.data[...] = 0.0


def run_block(block, x, **kw):
    with T.no_grad():
        return block(T.Tensor(x), **kw).data


# ---------------------------------------------------------------------------
# causal prefix mean


def test_prefix_mean_hand_values():
    out = causal_prefix_mean(T.Tensor([[2.0], [4.0], [6.0]]))
    assert np.allclose(out.data, [[2.0], [3.0], [4.0]])


def test_prefix_mean_constant_input():
    x = np.full((7, 3), 1.25)
    assert np.allclose(causal_prefix_mean(T.Tensor(x)).data, x)


def test_prefix_mean_matches_direct_summation():
    x = np.random.default_rng(0).standard_normal((50, D))
    out = causal_prefix_mean(T.Tensor(x)).data
    assert np.max(np.abs(out - prefix_mean_naive(x))) <= 1e-12


# ---------------------------------------------------------------------------
# squeeze-excitation


def se_weights(seed=1):
    rng = np.random.default_rng(seed)
    return Linear(D, 8, rng), Linear(8, D, rng)


def test_se_zero_weights_halves_input():
    reduce, expand = se_weights()
    zero_params(reduce)
    zero_params(expand)
    z = np.random.default_rng(2).standard_normal((9, D))
    out = squeeze_excite(T.Tensor(z), reduce, expand).data
    assert np.array_equal(out, 0.5 * z)


def test_se_zero_input_zero_output():
    reduce, expand = se_weights(3)
    out = squeeze_excite(T.Tensor(np.zeros((5, D))), reduce, expand).data
    assert np.all(out == 0.0)


def test_se_causality_bitwise():
    reduce, expand = se_weights(4)
    rng = np.random.default_rng(5)
    z = rng.standard_normal((16, D))
    with T.no_grad():
        base = squeeze_excite(T.Tensor(z), reduce, expand).data
    t0 = 9
    z2 = z.copy()
    z2[t0] += rng.standard_normal(D)
    with T.no_grad():
        pert = squeeze_excite(T.Tensor(z2), reduce, expand).data
    assert np.array_equal(base[:t0], pert[:t0])
    assert not np.array_equal(base[t0:], pert[t0:])


# ---------------------------------------------------------------------------
# single block


def test_block_zero_weights_is_identity():
    block = GlobalBlock(CFG, dilation=2, rng=np.random.default_rng(6))
    zero_params(block)
    x = np.random.default_rng(7).standard_normal((11, D))
    out = run_block(block, x)
    assert np.array_equal(out, x)


def test_block_shape_preserved():
    block = GlobalBlock(CFG, dilation=4, rng=np.random.default_rng(8))
    x = np.random.default_rng(9).standard_normal((13, D))
    assert run_block(block, x).shape == (13, D)


def test_block_causality_bitwise():
    block = GlobalBlock(CFG, dilation=2, rng=np.random.default_rng(10))
    rng = np.random.default_rng(11)
    x = rng.standard_normal((16, D))
    base = run_block(block, x)
    t0 = 9
    x2 = x.copy()
    x2[t0] += rng.standard_normal(D)
    pert = run_block(block, x2)
    assert np.array_equal(base[:t0], pert[:t0])


@pytest.mark.parametrize("block_index", [1, 2, 3])
def test_block_impulse_support_with_se_disabled(block_index):
    dilation = 2 ** block_index
    block = GlobalBlock(CFG, dilation=dilation, rng=np.random.default_rng(12))
    positive_conv_weights(block)
    t_len, t0 = 80, 10
    x = np.zeros((t_len, D))
    x[t0] = 1.0
    out = run_block(block, x, se_enabled=False)
    hot = np.where(np.abs(out).sum(axis=1) > 0)[0]
    reach = 1 + (CFG.dw_kernel - 1) * dilation
    assert hot[0] == t0
    assert hot[-1] <= t0 + reach - 1
    assert hot[-1] == t0 + reach - 1  # positive weights hit the full reach


# ---------------------------------------------------------------------------
# full stack


def test_stack_dilations_double_per_block():
    enc = GlobalEncoder(CFG, np.random.default_rng(13))
    assert [b.dilation for b in enc.blocks] == [2, 4, 8, 16, 32, 64]


def test_stack_zero_input_zero_output():
    enc = GlobalEncoder(CFG, np.random.default_rng(14))
    with T.no_grad():
        out = enc(T.Tensor(np.zeros((9, D)))).data
    assert np.all(out == 0.0)


def test_stack_causality_bitwise():
    enc = GlobalEncoder(CFG, np.random.default_rng(15))
    rng = np.random.default_rng(16)
    x = rng.standard_normal((20, D))
    with T.no_grad():
        base = enc(T.Tensor(x)).data
    t0 = 12
    x2 = x.copy()
    x2[t0] += rng.standard_normal(D)
    with T.no_grad():
        pert = enc(T.Tensor(x2)).data
    assert np.array_equal(base[:t0], pert[:t0])


def test_stack_zero_weights_is_identity():
    enc = GlobalEncoder(CFG, np.random.default_rng(17))
    for _, p in enc.params():
        p.data[...] = 0.0
    x = np.random.default_rng(18).standard_normal((8, D))
    with T.no_grad():
        out = enc(T.Tensor(x)).data
    assert np.array_equal(out, x)


def test_stack_conv_receptive_field_is_253():
    assert CFG.conv_receptive_field == 253
    enc = GlobalEncoder(CFG, np.random.default_rng(19))
    for block in enc.blocks:
        positive_conv_weights(block)
    t_len, t0 = 300, 20
    x = np.zeros((t_len, D))
    x[t0] = 1.0
    with T.no_grad():
        out = enc(T.Tensor(x), se_enabled=False).data
    hot = np.where(np.abs(out).sum(axis=1) > 0)[0]
    # All dilations are even, so interior coverage lands on even offsets; the
    # claim is about the span of the response.
    assert hot[0] == t0
    assert hot[-1] == t0 + 252
    assert hot[-1] - hot[0] + 1 == CFG.conv_receptive_field


def test_se_gives_full_prefix_reach():
    # With excitation on, any past frame influences later outputs.
    enc = GlobalEncoder(GlobalEncoderConfig(d_model=D, n_blocks=2), np.random.default_rng(20))
    rng = np.random.default_rng(21)
    x = rng.standard_normal((300, D))
    with T.no_grad():
        base = enc(T.Tensor(x)).data
    x2 = x.copy()
    x2[0] += 1.0
    with T.no_grad():
        pert = enc(T.Tensor(x2)).data
    assert not np.array_equal(base[-1], pert[-1])  # beyond conv reach, via SE


def test_block_gradients_flow():
    block = GlobalBlock(GlobalEncoderConfig(d_model=6, dropout_p=0.0), 2, np.random.default_rng(22))
    x = T.Tensor(np.random.default_rng(23).standard_normal((10, 6)), requires_grad=True)
    T.sum_all(block(x, training=True, update_stats=False)).backward()
    assert x.grad is not None
    for name, p in block.params():
        assert p.grad is not None, name
