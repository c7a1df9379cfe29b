"""Exact transducer alignment loss.

The negative log-likelihood marginalizes over every monotone alignment of U
label emissions and T frame advances (blanks) on the T x (U+1) trellis,
computed with a log-domain forward/backward dynamic program.  The gradient
with respect to the pre-softmax logits comes from posterior path occupancies:

    d nll / d logit(t, u, k) = softmax(t, u, k) * occ(t, u) - occ_k(t, u)

Minus infinity is represented by a large negative sentinel that logaddexp
absorbs without producing NaNs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor

NEG_INF = -1.0e30


@dataclass
class AlignmentLattice:
    log_probs_blank: np.ndarray  # [T, U+1]
    log_probs_label: np.ndarray  # [T, U]
    alpha: np.ndarray            # [T, U+1]
    beta: np.ndarray             # [T, U+1]

    @property
    def log_likelihood(self) -> float:
        t_last, u_last = self.alpha.shape[0] - 1, self.alpha.shape[1] - 1
        return float(self.alpha[t_last, u_last] + self.log_probs_blank[t_last, u_last])


@dataclass
class LossResult:
    nll: float
    grad_logits: np.ndarray  # [T, U+1, V+1], gradient w.r.t. raw logits
    lattice: AlignmentLattice


def _scan_forward(base: np.ndarray, chain: np.ndarray) -> np.ndarray:
    """Solve r[u] = logaddexp(base[u], r[u-1] + chain[u-1]) in one vector pass.

    With c[u] = sum(chain[:u]), r[u] = logsumexp_{j<=u}(base[j] - c[j]) + c[u],
    which is a running logaddexp over base - c.
    """
    c = np.concatenate(([0.0], np.cumsum(chain)))
    return np.logaddexp.accumulate(base - c) + c


def _scan_backward(base: np.ndarray, chain: np.ndarray) -> np.ndarray:
    """Solve r[u] = logaddexp(base[u], r[u+1] + chain[u]), scanning right to left."""
    c = np.concatenate((np.cumsum(chain[::-1])[::-1], [0.0]))
    return (np.logaddexp.accumulate((base - c)[::-1]) + c[::-1])[::-1]


def build_lattice(log_probs: np.ndarray, labels) -> AlignmentLattice:
    """Run the forward and backward recursions for one utterance.

    `log_probs` is the log-softmax-normalized [T, U+1, V+1] joint output and
    `labels` the U-token transcript (blank-free).
    """
    labels = np.asarray(labels, dtype=np.int64)
    t_len, u_rows, _ = log_probs.shape
    u_len = labels.size
    if u_rows != u_len + 1:
        raise ShapeError(f"log_probs has {u_rows} label rows, want {u_len + 1}")
    if t_len < 1:
        raise ShapeError("need at least one frame")

    blank_lp = log_probs[:, :, 0]
    label_lp = (
        log_probs[:, np.arange(u_len), labels] if u_len else np.zeros((t_len, 0))
    )

    alpha = np.full((t_len, u_len + 1), NEG_INF)
    alpha[0, 0] = 0.0
    if u_len:
        alpha[0, 1:] = np.cumsum(label_lp[0])
    for t in range(1, t_len):
        alpha[t] = _scan_forward(alpha[t - 1] + blank_lp[t - 1], label_lp[t])

    beta = np.full((t_len, u_len + 1), NEG_INF)
    beta[t_len - 1] = _scan_backward(
        np.concatenate((np.full(u_len, NEG_INF), [blank_lp[t_len - 1, u_len]])),
        label_lp[t_len - 1],
    )
    for t in range(t_len - 2, -1, -1):
        beta[t] = _scan_backward(beta[t + 1] + blank_lp[t], label_lp[t])

    return AlignmentLattice(blank_lp, label_lp, alpha, beta)


def rnnt_forward(log_probs: np.ndarray, labels, blank_id: int = 0) -> LossResult:
    """Loss and exact logit gradient for one utterance.

    The input must already be log-softmax normalized over the last axis; the
    returned gradient is nevertheless with respect to the *raw* logits (the
    softmax Jacobian is folded in via the occupancy identity).
    """
    if blank_id != 0:
        raise ShapeError("blank id is fixed at 0")
    labels = np.asarray(labels, dtype=np.int64)
    lat = build_lattice(log_probs, labels)
    t_len, u_rows = lat.alpha.shape
    u_len = u_rows - 1
    log_z = lat.log_likelihood
    nll = -log_z

    # Emission occupancies.  A blank at (t, u) continues at (t+1, u); the
    # final blank at (T-1, U) terminates with no continuation cost.
    beta_next_t = np.full((t_len, u_rows), NEG_INF)
    beta_next_t[:-1] = lat.beta[1:]
    beta_next_t[t_len - 1, u_len] = 0.0
    occ_blank = np.exp(lat.alpha + lat.log_probs_blank + beta_next_t - log_z)
    if u_len:
        occ_label = np.exp(
            lat.alpha[:, :-1] + lat.log_probs_label + lat.beta[:, 1:] - log_z
        )
    else:
        occ_label = np.zeros((t_len, 0))

    occ_total = occ_blank.copy()
    if u_len:
        occ_total[:, :-1] += occ_label

    grad = np.exp(log_probs) * occ_total[:, :, None]
    grad[:, :, 0] -= occ_blank
    for u in range(u_len):
        grad[:, u, labels[u]] -= occ_label[:, u]

    return LossResult(nll, grad, lat)


def rnnt_loss(logits: Tensor, labels, blank_id: int = 0) -> Tensor:
    """Tape node: scalar loss from raw joint logits [T, U+1, V+1]."""
    z = logits.data
    m = z.max(axis=-1, keepdims=True)
    log_probs = z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))
    result = rnnt_forward(log_probs, labels, blank_id)

    def backward(g):
        logits.accumulate_grad(float(g) * result.grad_logits)

    return T.from_op(np.asarray(result.nll), (logits,), backward)
