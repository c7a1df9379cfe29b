"""Global context encoder: residual blocks of pointwise -> dilated depthwise
-> pointwise causal 1-D convolution with causal squeeze-and-excitation.

The depthwise dilations double per block, so the convolutional receptive
field grows geometrically, while the squeeze-excite gate folds in a prefix
mean over *all* past steps.  Every block preserves the [T, D] shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .layers import BatchNormTime, Conv1dLayer, Linear
from .tensor import Tensor


@dataclass
class GlobalEncoderConfig:
    d_model: int
    n_blocks: int = 6
    expansion: int = 2
    dw_kernel: int = 3
    dilation_base_one: bool = True  # block i dilated by 2^i with i starting at 1
    se_divisor: int = 8
    se_min: int = 8
    dropout_p: float = 0.1
    se_enabled: bool = True

    def __post_init__(self):
        if self.d_model < 1 or self.n_blocks < 1 or self.expansion < 1:
            raise ConfigError("global encoder dimensions must be positive")

    def dilations(self):
        start = 1 if self.dilation_base_one else 0
        return [2 ** (start + i) for i in range(self.n_blocks)]

    @property
    def se_bottleneck(self) -> int:
        return max(self.d_model // self.se_divisor, self.se_min)

    @property
    def conv_receptive_field(self) -> int:
        # Depthwise reach only (squeeze-excite disabled), current frame included.
        return 1 + sum((self.dw_kernel - 1) * d for d in self.dilations())


def causal_prefix_mean(z: Tensor) -> Tensor:
    """Row i is the mean of rows 0..i; the causal 'squeeze' statistic."""
    return T.prefix_mean(z)


def squeeze_excite(z: Tensor, reduce: Linear, expand: Linear) -> Tensor:
    """Gate each step of [T, D] by sigmoid(expand(relu(reduce(prefix mean)))).

    The gate at step i depends only on steps <= i, so excitation stays causal.
    """
    gate = T.sigmoid(expand(T.relu(reduce(causal_prefix_mean(z)))))
    return T.mul(z, gate)


class GlobalBlock:
    def __init__(self, cfg: GlobalEncoderConfig, dilation: int, rng: np.random.Generator):
        d, e = cfg.d_model, cfg.expansion * cfg.d_model
        self.cfg = cfg
        self.dilation = dilation
        self.pw_in = Conv1dLayer(d, e, 1, rng)
        self.norm_in = BatchNormTime(e)
        self.dw = Conv1dLayer(e, e, cfg.dw_kernel, rng, dilation=dilation, groups=e)
        self.norm_dw = BatchNormTime(e)
        self.pw_out = Conv1dLayer(e, d, 1, rng)
        self.se_reduce = Linear(d, cfg.se_bottleneck, rng)
        self.se_expand = Linear(cfg.se_bottleneck, d, rng)

    def __call__(
        self,
        x: Tensor,
        training: bool = False,
        rng: np.random.Generator | None = None,
        update_stats: bool | None = None,
        se_enabled: bool | None = None,
    ) -> Tensor:
        return self.forward_batch([x], training, rng, update_stats, se_enabled)[0]

    def forward_batch(
        self,
        xs,
        training: bool = False,
        rng: np.random.Generator | None = None,
        update_stats: bool | None = None,
        se_enabled: bool | None = None,
    ):
        """Apply the block to a batch of [T_i, D] sequences.

        Convolutions, excitation, and the residual stay per-utterance, but
        batch-norm statistics pool over the whole batch's frames (time-axis
        concatenation), so training-mode normalization matches what the
        frozen running stats will see at eval time.
        """
        cfg = self.cfg
        if se_enabled is None:
            se_enabled = cfg.se_enabled
        hs = [T.relu(self.pw_in(T.transpose2d(x))) for x in xs]  # [D*, T_i]
        hs = self._norm_batch(self.norm_in, hs, training, update_stats)
        hs = [
            T.relu(self.dw(T.pad_left_time(h, (cfg.dw_kernel - 1) * self.dilation)))
            for h in hs
        ]
        hs = self._norm_batch(self.norm_dw, hs, training, update_stats)
        out = []
        for x, h in zip(xs, hs):
            z = T.transpose2d(self.pw_out(h))  # [T, D]
            if se_enabled:
                z = squeeze_excite(z, self.se_reduce, self.se_expand)
            z = T.dropout(z, cfg.dropout_p, training, rng)
            out.append(T.add(x, z))
        return out

    @staticmethod
    def _norm_batch(norm: BatchNormTime, hs, training, update_stats):
        if len(hs) == 1:
            return [norm(hs[0], training, update_stats)]
        lengths = [h.shape[1] for h in hs]
        normed = norm(T.concat(hs, axis=1), training, update_stats)
        out = []
        offset = 0
        for n in lengths:
            out.append(T.slice_axis(normed, 1, offset, offset + n))
            offset += n
        return out

    def params(self):
        children = [
            ("pw_in", self.pw_in),
            ("norm_in", self.norm_in),
            ("dw", self.dw),
            ("norm_dw", self.norm_dw),
            ("pw_out", self.pw_out),
            ("se_reduce", self.se_reduce),
            ("se_expand", self.se_expand),
        ]
        out = []
        for prefix, child in children:
            for name, p in child.params():
                out.append((f"{prefix}.{name}", p))
        return out

    def norm_layers(self):
        return [("norm_in", self.norm_in), ("norm_dw", self.norm_dw)]


class GlobalEncoder:
    def __init__(self, cfg: GlobalEncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.blocks = [GlobalBlock(cfg, d, rng) for d in cfg.dilations()]

    def __call__(
        self,
        x: Tensor,
        training: bool = False,
        rng: np.random.Generator | None = None,
        update_stats: bool | None = None,
        se_enabled: bool | None = None,
    ) -> Tensor:
        return self.forward_batch([x], training, rng, update_stats, se_enabled)[0]

    def forward_batch(
        self,
        xs,
        training: bool = False,
        rng: np.random.Generator | None = None,
        update_stats: bool | None = None,
        se_enabled: bool | None = None,
    ):
        hs = list(xs)
        for block in self.blocks:
            hs = block.forward_batch(hs, training, rng, update_stats, se_enabled)
        return hs

    def params(self):
        out = []
        for i, block in enumerate(self.blocks):
            for name, p in block.params():
                out.append((f"block{i + 1}.{name}", p))
        return out

    def norm_layers(self):
        out = []
        for i, block in enumerate(self.blocks):
            for name, bn in block.norm_layers():
                out.append((f"block{i + 1}.{name}", bn))
        return out
