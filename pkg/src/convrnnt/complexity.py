"""Analytical FLOPs estimator for encoder architectures.

Closed-form per-layer costs (exact integer arithmetic throughout):

    convolution:  4 * C_in * k^2 * C_out * W * H
    LSTM stack:   8 * layers * steps * (input + hidden) * hidden
    attention:    8 * n * d^2  (Q/K/V/O projections) + 4 * n^2 * d (scores)
    feedforward:  4 * n * d * d_ff  (two linear maps, multiply-add = 2 flops)

Two counting specs ship as config files: the convolutional-recurrent
transducer encoder (cost linear in sequence length) and a causal
attention baseline (quadratic term from self-attention).  Attention and
feedforward totals are approximate by construction; the comparison is about
scaling, not exact curve values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

from .config import parse_config_text
from .errors import ConfigError

MODEL_NAMES = ("convrnnt", "conformer")


def conv_flops(c_in: int, k: int, c_out: int, w: int, h: int) -> int:
    _positive(c_in=c_in, k=k, c_out=c_out, w=w, h=h)
    return 4 * c_in * k * k * c_out * w * h


def lstm_flops(layers: int, steps: int, input_dim: int, hidden: int) -> int:
    _positive(layers=layers, steps=steps, input_dim=input_dim, hidden=hidden)
    return 8 * layers * steps * (input_dim + hidden) * hidden


def attention_flops(n: int, d: int, heads: int = 1) -> int:
    _positive(n=n, d=d, heads=heads)
    return 8 * n * d * d + 4 * n * n * d


def ffn_flops(n: int, d: int, d_ff: int) -> int:
    _positive(n=n, d=d, d_ff=d_ff)
    return 4 * n * d * d_ff


def _positive(**kwargs):
    for name, v in kwargs.items():
        if int(v) != v or v < 1:
            raise ConfigError(f"{name} must be a positive integer, got {v}")


@dataclass
class LayerSpec:
    name: str
    flops: int


@dataclass
class FlopsReport:
    model: str
    sequence_length: int
    per_layer: list

    @property
    def total(self) -> int:
        return sum(layer.flops for layer in self.per_layer)

    @property
    def gflops(self) -> float:
        return self.total / 1e9


def _load_spec(name: str) -> dict:
    if name not in MODEL_NAMES:
        raise ConfigError(f"unknown flops model {name!r}; known: {MODEL_NAMES}")
    text = resources.files("convrnnt.configs").joinpath(f"flops_{name}.cfg").read_text()
    return parse_config_text(text)


def _ints(raw: str):
    return [int(v) for v in raw.split(",") if v.strip()]


def _convrnnt_layers(spec: dict, n: int):
    s = math.ceil(n / int(spec["model.frame_subsampling"]))
    layers = []
    chain = _ints(spec["local.channels"])
    k = int(spec["local.kernel"])
    for i, (c_in, c_out) in enumerate(zip(chain[:-1], chain[1:])):
        layers.append(LayerSpec(f"local.conv{i} [{c_in}->{c_out} k{k}]", conv_flops(c_in, k, c_out, s, 1)))
    d = int(spec["global.d_model"])
    e = d * int(spec["global.expansion"])
    dw_k = int(spec["global.dw_kernel"])
    se_b = max(d // int(spec["global.se_divisor"]), int(spec["global.se_min"]))
    for i in range(1, int(spec["global.blocks"]) + 1):
        block = (
            conv_flops(d, 1, e, s, 1)
            + conv_flops(1, dw_k, e, s, 1)
            + conv_flops(e, 1, d, s, 1)
            + conv_flops(d, 1, se_b, s, 1)
            + conv_flops(se_b, 1, d, s, 1)
        )
        layers.append(LayerSpec(f"global.block{i} [d{d} dw_k{dw_k}]", block))
    layers.append(
        LayerSpec(
            f"lstm_stack [{spec['lstm.layers']}x{spec['lstm.hidden']}]",
            lstm_flops(int(spec["lstm.layers"]), s, int(spec["lstm.input_dim"]), int(spec["lstm.hidden"])),
        )
    )
    return layers


def _conformer_layers(spec: dict, n: int):
    layers = []
    chain = _ints(spec["subsample.channels"])
    k = int(spec["subsample.kernel"])
    freq = int(spec["subsample.freq"])
    s = n
    for i, (c_in, c_out) in enumerate(zip(chain[:-1], chain[1:])):
        s = math.ceil(s / 2)
        freq = math.ceil(freq / 2)
        layers.append(
            LayerSpec(f"subsample.conv{i} [{c_in}->{c_out} k{k} /2]", conv_flops(c_in, k, c_out, s, freq))
        )
    d = int(spec["attention.dim"])
    layers.append(
        LayerSpec("subsample.proj", conv_flops(chain[-1] * freq, 1, d, s, 1))
    )
    heads = int(spec["attention.heads"])
    d_ff = int(spec["ffn.dim"])
    ffn_per_block = int(spec["ffn.per_block"])
    conv_k = int(spec["conv.kernel"])
    for i in range(1, int(spec["attention.layers"]) + 1):
        block = (
            ffn_per_block * ffn_flops(s, d, d_ff)
            + attention_flops(s, d, heads)
            + conv_flops(d, 1, 2 * d, s, 1)
            + conv_flops(1, conv_k, d, s, 1)
            + conv_flops(d, 1, d, s, 1)
        )
        layers.append(LayerSpec(f"block{i} [d{d} h{heads} ff{d_ff}]", block))
    return layers


def encoder_flops(model: str, n: int) -> FlopsReport:
    """Total encoder FLOPs for `n` acoustic frames (10 ms hop)."""
    if n < 1:
        raise ConfigError(f"sequence length must be positive, got {n}")
    spec = _load_spec(model)
    if model == "convrnnt":
        layers = _convrnnt_layers(spec, n)
    else:
        layers = _conformer_layers(spec, n)
    return FlopsReport(model, n, layers)


def parse_length_range(text: str):
    """'500:4000:500' -> [500, 1000, ..., 4000]; a bare int is a single length."""
    parts = [int(p) for p in text.split(":")]
    if len(parts) == 1:
        return parts
    if len(parts) != 3:
        raise ConfigError(f"length range must be start:stop:step, got {text!r}")
    start, stop, step = parts
    if step < 1 or stop < start:
        raise ConfigError(f"bad length range {text!r}")
    return list(range(start, stop + 1, step))


def flops_curve_csv(models, lengths) -> str:
    """CSV rows (length, gflops, model) for plotting."""
    lines = ["length,gflops,model"]
    for model in models:
        for n in lengths:
            lines.append(f"{n},{encoder_flops(model, n).gflops:.6f},{model}")
    return "\n".join(lines) + "\n"
