"""Attention-guided gated fusion of decoder and encoder features (skip replacement)."""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import ops
from .nn import BatchNorm2d, Conv2d, Linear, Module
from .tensor import DimensionError, Tensor, add, concat_channels, mul, relu, sigmoid, sub


class PagfMode(str, Enum):
    FULL = "full"
    NO_CHANNEL = "no_channel"
    NO_SPATIAL = "no_spatial"
    NO_GATE = "no_gate"
    ADD_ONLY = "add_only"
    SIMPLE_SKIP = "simple_skip"


def gated_fusion(x_d: Tensor, x_e: Tensor, attn, gate) -> Tensor:
    """G * (x_d * A) + (1 - G) * (x_e * A)."""
    return add(mul(gate, mul(x_d, attn)), mul(sub(1.0, gate), mul(x_e, attn)))


class ChannelAttention(Module):
    """Squeeze-excitation weights: sigmoid(W2 relu(W1 avgpool(x))), shape [N,C,1,1]."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 8):
        super().__init__()
        r = min(reduction, channels)
        hidden = max(channels // r, 1)
        self.fc1 = Linear(channels, hidden, rng, group="pagf")
        self.fc2 = Linear(hidden, channels, rng, group="pagf")

    def forward(self, x: Tensor) -> Tensor:
        n, c = x.shape[:2]
        pooled = ops.avg_pool_global(x).reshape(n, c)
        return sigmoid(self.fc2(relu(self.fc1(pooled)))).reshape(n, c, 1, 1)


class SpatialAttention(Module):
    """sigmoid(conv7x7([mean_c(x), max_c(x)])), shape [N,1,H,W]."""

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        self.conv = Conv2d(2, 1, 7, rng, pad=3, group="pagf")

    def forward(self, x: Tensor) -> Tensor:
        stats = concat_channels(ops.mean_channelwise(x), ops.max_pool_channelwise(x))
        return sigmoid(self.conv(stats))


class Refine(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv = Conv2d(channels, channels, 3, rng, bias=False, group="pagf")
        self.bn = BatchNorm2d(channels, group="pagf")

    def forward(self, x: Tensor) -> Tensor:
        return relu(self.bn(self.conv(x)))


class PAGF(Module):
    """Fuse upsampled decoder features ``x_d`` with encoder features ``x_e``.

    Only the sub-modules needed by ``mode`` are built, so every registered
    parameter takes part in the forward pass.
    """

    def __init__(self, channels: int, rng: np.random.Generator, mode: PagfMode | str = PagfMode.FULL, reduction: int = 8):
        super().__init__()
        self.mode = PagfMode(mode)
        self.channels = channels
        m = self.mode
        if m == PagfMode.SIMPLE_SKIP:
            self.reduce = Conv2d(2 * channels, channels, 1, rng, group="pagf")
            return
        if m != PagfMode.ADD_ONLY:
            self.combine = Conv2d(2 * channels, channels, 1, rng, group="pagf")
            if m != PagfMode.NO_CHANNEL:
                self.channel_att = ChannelAttention(channels, rng, reduction)
            if m != PagfMode.NO_SPATIAL:
                self.spatial_att = SpatialAttention(rng)
            if m != PagfMode.NO_GATE:
                self.gate = Conv2d(2 * channels, channels, 1, rng, group="pagf")
        self.refine = Refine(channels, rng)

    def maps(self, x_d: Tensor, x_e: Tensor) -> tuple[Tensor, Tensor | float]:
        """Attention map A and gating map G computed from the concatenation."""
        cat = concat_channels(x_d, x_e)
        reduced = self.combine(cat)
        if self.mode == PagfMode.NO_CHANNEL:
            attn = self.spatial_att(reduced)
        elif self.mode == PagfMode.NO_SPATIAL:
            attn = self.channel_att(reduced)
        else:
            attn = mul(self.channel_att(reduced), self.spatial_att(reduced))
        gate = 0.5 if self.mode == PagfMode.NO_GATE else sigmoid(self.gate(cat))
        return attn, gate

    def pre_refine(self, x_d: Tensor, x_e: Tensor) -> Tensor:
        if self.mode == PagfMode.ADD_ONLY:
            return add(x_d, x_e)
        attn, gate = self.maps(x_d, x_e)
        return gated_fusion(x_d, x_e, attn, gate)

    def forward(self, x_d: Tensor, x_e: Tensor) -> Tensor:
        if x_d.shape != x_e.shape:
            raise DimensionError(f"PAGF inputs differ: {x_d.shape} vs {x_e.shape}")
        if self.mode == PagfMode.SIMPLE_SKIP:
            return self.reduce(concat_channels(x_d, x_e))
        return self.refine(self.pre_refine(x_d, x_e))
