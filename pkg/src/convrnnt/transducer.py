"""Transducer core: frontend fusion, the unidirectional LSTM audio encoder
with per-layer Swish projections, the autoregressive label encoder, and the
additive joint network producing per-(t, u) token logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError, ShapeError
from .layers import Embedding, Linear, uniform_init, zeros_param
from .tensor import Tensor


@dataclass
class TransducerConfig:
    input_dim: int = 192      # fused feature dimension fed to the LSTM stack
    enc_layers: int = 7
    enc_hidden: int = 640
    proj_dim: int = 512       # per-layer projection width == encoder output dim
    label_layers: int = 1
    label_hidden: int = 640
    label_embed: int = 256
    label_proj: int = 512
    joint_dim: int = 512
    vocab_size: int = 2500    # real tokens; blank (id 0) is extra
    blank_id: int = 0
    dropout_p: float = 0.1
    label_dropout_p: float = -1.0  # < 0 inherits dropout_p

    @property
    def effective_label_dropout(self) -> float:
        return self.dropout_p if self.label_dropout_p < 0 else self.label_dropout_p

    def __post_init__(self):
        for name in (
            "input_dim", "enc_layers", "enc_hidden", "proj_dim", "label_layers",
            "label_hidden", "label_embed", "label_proj", "joint_dim", "vocab_size",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.blank_id != 0:
            raise ConfigError("blank id is fixed at 0")


class LSTMLayer:
    """One uniLSTM layer (fused gate weights) followed by projection + Swish.

    Gate layout in the fused [*, 4H] pre-activation is input, forget,
    candidate, output.  The forget-gate bias starts at 1; hidden and cell
    state are zeros at the start of every utterance.
    """

    def __init__(self, n_in: int, hidden: int, proj: int, rng: np.random.Generator):
        self.n_in = n_in
        self.hidden = hidden
        self.w = uniform_init(rng, (n_in, 4 * hidden), n_in)
        self.u = uniform_init(rng, (hidden, 4 * hidden), hidden)
        self.b = zeros_param(4 * hidden)
        self.b.data[hidden:2 * hidden] = 1.0
        self.proj = Linear(hidden, proj, rng)

    def initial_state(self):
        return Tensor(np.zeros((1, self.hidden))), Tensor(np.zeros((1, self.hidden)))

    def _gates(self, pre: Tensor, h: Tensor, c: Tensor):
        s = T.add(pre, T.matmul(h, self.u))
        i, f, g, o = T.split_columns(s, 4)
        c2 = T.add(T.mul(T.sigmoid(f), c), T.mul(T.sigmoid(i), T.tanh(g)))
        h2 = T.mul(T.sigmoid(o), T.tanh(c2))
        return h2, c2

    def cell_step(self, x_row: Tensor, h: Tensor, c: Tensor):
        """Advance one time step; x_row is [1, n_in]."""
        pre = T.add(T.matmul(x_row, self.w), self.b)
        return self._gates(pre, h, c)

    def hidden_states(self, xs: Tensor) -> Tensor:
        """[T, n_in] -> raw hidden states [T, hidden], fresh zero state."""
        t_len = xs.shape[0]
        pre_all = T.add(T.matmul(xs, self.w), self.b)
        h, c = self.initial_state()
        rows = []
        for t in range(t_len):
            h, c = self._gates(T.slice_axis(pre_all, 0, t, t + 1), h, c)
            rows.append(h)
        return T.concat(rows, axis=0)

    def project(self, hs: Tensor) -> Tensor:
        return T.swish(self.proj(hs))

    def __call__(
        self,
        xs: Tensor,
        training: bool = False,
        rng: np.random.Generator | None = None,
        dropout_p: float = 0.0,
    ) -> Tensor:
        out = self.project(self.hidden_states(xs))
        return T.dropout(out, dropout_p, training, rng)

    def params(self):
        return [
            ("w", self.w),
            ("u", self.u),
            ("b", self.b),
            ("proj.weight", self.proj.weight),
            ("proj.bias", self.proj.bias),
        ]


class AudioEncoder:
    """Stack of LSTM layers; layer k > 0 consumes the previous projection."""

    def __init__(self, cfg: TransducerConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.layers = []
        n_in = cfg.input_dim
        for _ in range(cfg.enc_layers):
            self.layers.append(LSTMLayer(n_in, cfg.enc_hidden, cfg.proj_dim, rng))
            n_in = cfg.proj_dim

    def __call__(self, xs: Tensor, training: bool = False, rng=None) -> Tensor:
        h = xs
        for layer in self.layers:
            h = layer(h, training, rng, self.cfg.dropout_p)
        return h

    def params(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, p in layer.params():
                out.append((f"layer{i}.{name}", p))
        return out


class LabelEncoder:
    """Encodes emitted-token prefixes; row u is the state after y_1..y_u.

    The start state (row 0) comes from a zero input vector rather than a
    dedicated start token.
    """

    def __init__(self, cfg: TransducerConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.embed = Embedding(cfg.vocab_size + 1, cfg.label_embed, rng)
        self.layers = []
        n_in = cfg.label_embed
        for _ in range(cfg.label_layers):
            self.layers.append(LSTMLayer(n_in, cfg.label_hidden, cfg.label_proj, rng))
            n_in = cfg.label_proj

    def _check_tokens(self, tokens: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.size and (
            tokens.min() < 1 or tokens.max() > self.cfg.vocab_size
        ):
            raise DataError(
                f"token ids must be in [1, {self.cfg.vocab_size}] (blank excluded), "
                f"got range [{tokens.min()}, {tokens.max()}]"
            )
        return tokens

    def __call__(self, tokens, training: bool = False, rng=None) -> Tensor:
        tokens = self._check_tokens(tokens)
        start = Tensor(np.zeros((1, self.cfg.label_embed)))
        if tokens.size:
            xs = T.concat([start, self.embed(tokens)], axis=0)
        else:
            xs = start
        h = xs
        for layer in self.layers:
            h = layer(h, training, rng, self.cfg.effective_label_dropout)
        return h

    def params(self):
        out = [("embed.table", self.embed.table)]
        for i, layer in enumerate(self.layers):
            for name, p in layer.params():
                out.append((f"lstm{i}.{name}", p))
        return out


class Joint:
    """logits[t, u, :] = W_out . tanh(A.enc_t + B.pred_u + b)."""

    def __init__(self, cfg: TransducerConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.enc_proj = uniform_init(rng, (cfg.proj_dim, cfg.joint_dim), cfg.proj_dim)
        self.pred_proj = uniform_init(rng, (cfg.label_proj, cfg.joint_dim), cfg.label_proj)
        self.bias = zeros_param(cfg.joint_dim)
        self.out = Linear(cfg.joint_dim, cfg.vocab_size + 1, rng)

    def __call__(self, enc: Tensor, pred: Tensor) -> Tensor:
        t_len, u_len = enc.shape[0], pred.shape[0]
        z = T.add(T.outer_sum(T.matmul(enc, self.enc_proj), T.matmul(pred, self.pred_proj)),
                  self.bias)
        z = T.tanh(z)
        flat = self.out(T.reshape(z, (t_len * u_len, self.cfg.joint_dim)))
        return T.reshape(flat, (t_len, u_len, self.cfg.vocab_size + 1))

    def params(self):
        return [
            ("enc_proj", self.enc_proj),
            ("pred_proj", self.pred_proj),
            ("bias", self.bias),
            ("out.weight", self.out.weight),
            ("out.bias", self.out.bias),
        ]


def fuse_frontends(parts, proj: Linear) -> Tensor:
    """Concatenate frontend outputs along features and project back to the
    original input dimension."""
    if len(parts) > 1:
        t_lens = {p.shape[0] for p in parts}
        if len(t_lens) != 1:
            raise ShapeError(f"frontend outputs disagree on time length: {sorted(t_lens)}")
    cat = parts[0] if len(parts) == 1 else T.concat(parts, axis=1)
    return proj(cat)
