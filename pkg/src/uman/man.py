"""Multi-scale adaptive KAN stage: patch embedding, KAN branch, MSAB branch, fusion."""

from __future__ import annotations

import numpy as np

from .kan import KANBlock, SplineGrid
from .nn import BatchNorm2d, Conv2d, DepthwiseConv2d, LayerNorm, Module
from .tensor import Tensor, add, mul, relu, transpose


def map_to_tokens(x: Tensor) -> Tensor:
    n, d, h, w = x.shape
    return transpose(x, (0, 2, 3, 1)).reshape(n, h * w, d)


def tokens_to_map(tokens: Tensor, h: int, w: int) -> Tensor:
    n, length, d = tokens.shape
    if length != h * w:
        raise ValueError(f"{length} tokens cannot fill a {h}x{w} grid")
    return transpose(tokens.reshape(n, h, w, d), (0, 3, 1, 2))


def fuse_branches(w1: Tensor, f_msab: Tensor, w2: Tensor, f_kan: Tensor) -> Tensor:
    """Learnable weighted sum ``w1 * f_msab + w2 * f_kan``."""
    return add(mul(w1, f_msab), mul(w2, f_kan))


class PatchEmbed(Module):
    """3x3 conv (stride 1 or 2, pad 1) to ``dim`` channels, flattened row-major and layer-normed."""

    def __init__(self, cin: int, dim: int, rng: np.random.Generator, stride: int = 2):
        super().__init__()
        self.proj = Conv2d(cin, dim, 3, rng, stride=stride, pad=1)
        self.norm = LayerNorm(dim)

    def forward(self, x: Tensor) -> tuple[Tensor, tuple[int, int]]:
        m = self.proj(x)
        return self.norm(map_to_tokens(m)), (m.shape[2], m.shape[3])


class MSDC(Module):
    """Average of depthwise conv -> BN -> ReLU branches, one per kernel size."""

    def __init__(self, dim: int, kernel_sizes, rng: np.random.Generator):
        super().__init__()
        kernel_sizes = tuple(kernel_sizes)
        if not kernel_sizes:
            raise ValueError("MSDC needs at least one kernel size")
        if any(k < 1 or k % 2 == 0 for k in kernel_sizes):
            raise ValueError(f"kernel sizes must be odd, got {kernel_sizes}")
        self.kernel_sizes = kernel_sizes
        for k in kernel_sizes:
            setattr(self, f"dw{k}", DepthwiseConv2d(dim, k, rng))
            setattr(self, f"bn{k}", BatchNorm2d(dim))

    def forward(self, x: Tensor) -> Tensor:
        total = None
        for k in self.kernel_sizes:
            y = relu(getattr(self, f"bn{k}")(getattr(self, f"dw{k}")(x)))
            total = y if total is None else add(total, y)
        if len(self.kernel_sizes) == 1:
            return total
        return mul(total, 1.0 / len(self.kernel_sizes))


class MSAB(Module):
    """1x1 conv-BN-ReLU, MSDC, 1x1 conv-BN, residual add, ReLU."""

    def __init__(self, dim: int, kernel_sizes, rng: np.random.Generator):
        super().__init__()
        self.conv_in = Conv2d(dim, dim, 1, rng, bias=False)
        self.bn_in = BatchNorm2d(dim)
        self.msdc = MSDC(dim, kernel_sizes, rng)
        self.conv_out = Conv2d(dim, dim, 1, rng, bias=False)
        self.bn_out = BatchNorm2d(dim)

    def forward(self, x: Tensor) -> Tensor:
        h = relu(self.bn_in(self.conv_in(x)))
        h = self.bn_out(self.conv_out(self.msdc(h)))
        return relu(add(h, x))


class MANStage(Module):
    """Dual-branch stage: stacked KANBlocks and an MSAB over the same embedded map.

    With ``use_msab=False`` the MSAB branch and its weight are dropped and the
    stage reduces to the KAN branch (followed by the same output norm).
    """

    def __init__(
        self,
        cin: int,
        dim: int,
        depth: int,
        rng: np.random.Generator,
        stride: int = 2,
        kernel_sizes=(1, 3, 5),
        grid: SplineGrid | None = None,
        drop_path: float = 0.0,
        use_msab: bool = True,
    ):
        super().__init__()
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        self.depth = depth
        self.use_msab = use_msab
        self.embed = PatchEmbed(cin, dim, rng, stride=stride)
        for i in range(depth):
            setattr(self, f"block{i}", KANBlock(dim, rng, grid, drop_path))
        if use_msab:
            self.msab = MSAB(dim, kernel_sizes, rng)
            self.w1 = self.param("w1", np.ones(1), "man_fusion")
        self.w2 = self.param("w2", np.ones(1), "man_fusion")
        self.norm = LayerNorm(dim)

    @property
    def blocks(self) -> list[KANBlock]:
        return [getattr(self, f"block{i}") for i in range(self.depth)]

    def branches(self, x: Tensor) -> tuple[Tensor | None, Tensor]:
        """Return (F_msab, F_kan) as NCHW maps at the embedded resolution."""
        tokens, (h, w) = self.embed(x)
        t = tokens
        for blk in self.blocks:
            t = blk(t)
        f_kan = tokens_to_map(t, h, w)
        f_msab = self.msab(tokens_to_map(tokens, h, w)) if self.use_msab else None
        return f_msab, f_kan

    def fuse(self, f_msab: Tensor | None, f_kan: Tensor) -> Tensor:
        if f_msab is None:
            fused = mul(self.w2, f_kan)
        else:
            fused = fuse_branches(self.w1, f_msab, self.w2, f_kan)
        _, _, h, w = fused.shape
        return tokens_to_map(self.norm(map_to_tokens(fused)), h, w)

    def forward(self, x: Tensor) -> Tensor:
        return self.fuse(*self.branches(x))
