"""Local context encoder: a stack of causal 2-D convolutions over a
(stacked-frame channels) x time x frequency view of the input features.

Each layer left-pads time by (k_t - 1) so the output at frame t only sees
frames <= t, and pads frequency symmetrically so the band axis keeps its
width.  Time length is preserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .layers import Conv2dLayer
from .tensor import Tensor


@dataclass
class LocalEncoderConfig:
    channels: tuple = (100, 100, 64, 64)
    kernel_t: int = 5
    kernel_f: int = 5
    in_channels: int = 3  # stacked frames viewed as channels
    n_freq: int = 64      # bands per stacked frame

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if self.kernel_f % 2 != 1:
            raise ConfigError(f"frequency kernel must be odd for same-padding, got {self.kernel_f}")
        if self.n_freq < self.kernel_f:
            raise ConfigError(
                f"frequency axis ({self.n_freq}) smaller than kernel ({self.kernel_f})"
            )

    @property
    def input_dim(self) -> int:
        return self.in_channels * self.n_freq

    @property
    def output_dim(self) -> int:
        return self.channels[-1] * self.n_freq

    @property
    def receptive_field(self) -> int:
        # Past time reach of the full stack, current frame included.
        return len(self.channels) * (self.kernel_t - 1) + 1


class LocalEncoder:
    def __init__(self, cfg: LocalEncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.convs = []
        c_prev = cfg.in_channels
        for c in cfg.channels:
            self.convs.append(Conv2dLayer(c_prev, c, cfg.kernel_t, cfg.kernel_f, rng))
            c_prev = c

    def __call__(self, x: Tensor) -> Tensor:
        """[T, in_channels * n_freq] -> [T, channels[-1] * n_freq]."""
        cfg = self.cfg
        t_len = x.shape[0]
        if x.shape[1] != cfg.input_dim:
            raise ShapeError(f"local encoder expects dim {cfg.input_dim}, got {x.shape[1]}")
        h = T.permute(T.reshape(x, (t_len, cfg.in_channels, cfg.n_freq)), (1, 0, 2))
        pf = (cfg.kernel_f - 1) // 2
        for conv in self.convs:
            h = T.pad_zeros(h, ((0, 0), (cfg.kernel_t - 1, 0), (pf, pf)))
            h = T.relu(conv(h))
        return T.reshape(T.permute(h, (1, 0, 2)), (t_len, cfg.output_dim))

    def params(self):
        out = []
        for i, conv in enumerate(self.convs):
            for name, p in conv.params():
                out.append((f"conv{i}.{name}", p))
        return out
