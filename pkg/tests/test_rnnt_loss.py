import math

import numpy as np
import pytest

from convrnnt import tensor as T
from convrnnt.rnnt_loss import build_lattice, rnnt_forward, rnnt_loss

from oracles import fd_gradient, rel_err, transducer_nll_enumeration


def uniform_log_probs(t_len, u_len, n_sym):
    return np.full((t_len, u_len + 1, n_sym), -math.log(n_sym))


def random_log_probs(rng, t_len, u_len, n_sym):
    z = rng.standard_normal((t_len, u_len + 1, n_sym)) * 2.0
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def test_single_blank_uniform():
    res = rnnt_forward(uniform_log_probs(1, 0, 3), [])
    assert abs(res.nll - math.log(3.0)) <= 1e-12


def test_two_frames_one_label_uniform():
    # Two alignments, each with three moves of probability 1/3.
    res = rnnt_forward(uniform_log_probs(2, 1, 3), [1])
    assert abs(res.nll - math.log(27.0 / 2.0)) <= 1e-12


def test_matches_enumeration_t3_u2():
    rng = np.random.default_rng(0)
    lp = random_log_probs(rng, 3, 2, 4)
    labels = [2, 1]
    res = rnnt_forward(lp, labels)
    assert abs(res.nll - transducer_nll_enumeration(lp, labels)) <= 1e-10


@pytest.mark.parametrize("t_len", [1, 2, 3, 4])
@pytest.mark.parametrize("u_len", [0, 1, 2, 3])
def test_matches_enumeration_grid(t_len, u_len):
    rng = np.random.default_rng(10 * t_len + u_len)
    for v in (1, 2, 3):
        lp = random_log_probs(rng, t_len, u_len, v + 1)
        labels = rng.integers(1, v + 1, size=u_len)
        res = rnnt_forward(lp, labels)
        assert abs(res.nll - transducer_nll_enumeration(lp, labels)) <= 1e-10


def test_forward_backward_consistency():
    rng = np.random.default_rng(1)
    for _ in range(20):
        t_len = int(rng.integers(1, 9))
        u_len = int(rng.integers(0, 6))
        lp = random_log_probs(rng, t_len, u_len, 5)
        labels = rng.integers(1, 5, size=u_len)
        lat = build_lattice(lp, labels)
        assert abs(lat.log_likelihood - lat.beta[0, 0]) <= 1e-10


def test_gradient_rows_sum_to_zero():
    rng = np.random.default_rng(2)
    lp = random_log_probs(rng, 5, 3, 6)
    res = rnnt_forward(lp, [1, 4, 2])
    assert np.max(np.abs(res.grad_logits.sum(axis=-1))) <= 1e-10


def test_gradient_matches_fd():
    rng = np.random.default_rng(3)
    logits = rng.standard_normal((3, 3, 4)) * 1.5
    labels = [3, 1]

    def f(z):
        return float(rnnt_loss(T.Tensor(z), labels).data)

    node = T.Tensor(logits, requires_grad=True)
    rnnt_loss(node, labels).backward()
    num = fd_gradient(f, logits.copy())
    assert rel_err(node.grad, num) <= 1e-5


def test_nll_nonnegative():
    rng = np.random.default_rng(4)
    for _ in range(10):
        lp = random_log_probs(rng, 4, 2, 4)
        assert rnnt_forward(lp, [1, 2]).nll >= 0.0


def test_raising_correct_label_logprob_never_hurts():
    # At the (unnormalized) log-probability level each path is monotone in
    # every correct-label entry, so the marginal can only improve.
    rng = np.random.default_rng(5)
    lp = random_log_probs(rng, 4, 3, 4)
    labels = [2, 3, 1]
    base = rnnt_forward(lp, labels).nll
    for t in range(4):
        for u in range(3):
            bumped = lp.copy()
            bumped[t, u, labels[u]] += 0.3
            assert rnnt_forward(bumped, labels).nll <= base + 1e-12


def test_long_label_burst_at_single_frame():
    # T=1 with U labels is feasible: emit everything, then the final blank.
    lp = uniform_log_probs(1, 3, 5)
    res = rnnt_forward(lp, [1, 2, 3])
    assert abs(res.nll - 4 * math.log(5.0)) <= 1e-12


def test_loss_op_scales_gradient_with_seed():
    rng = np.random.default_rng(6)
    logits = rng.standard_normal((2, 2, 3))
    n1 = T.Tensor(logits, requires_grad=True)
    rnnt_loss(n1, [1]).backward()
    n2 = T.Tensor(logits, requires_grad=True)
    rnnt_loss(n2, [1]).backward(np.asarray(0.5))
    assert np.allclose(n2.grad, 0.5 * n1.grad)
