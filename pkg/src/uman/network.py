"""U-MAN assembly: conv encoder, MAN stages, PAGF-fused decoder, 1x1 head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .kan import SplineGrid
from .man import MANStage
from .nn import BatchNorm2d, Conv2d, Module
from .pagf import PAGF, PagfMode
from .tensor import DimensionError, Tensor, relu

PAPER_DIMS = (32, 64, 256, 320, 512)
DESK_DIMS = (8, 16, 32, 40, 64)


@dataclass
class NetworkConfig:
    embed_dims: tuple[int, ...] = PAPER_DIMS
    man_depths: tuple[int, ...] = (3, 3, 3)
    msab_kernels: tuple[int, ...] = (1, 3, 5)
    use_msab: bool = True
    grid_size: int = 5
    spline_order: int = 3
    grid_lo: float = -1.0
    grid_hi: float = 1.0
    pagf_mode: str = PagfMode.FULL.value
    reduction: int = 8
    drop_path: float = 0.0
    num_classes: int = 1
    input_channels: int = 3

    def __post_init__(self):
        self.embed_dims = tuple(int(d) for d in self.embed_dims)
        self.man_depths = tuple(int(d) for d in self.man_depths)
        self.msab_kernels = tuple(int(k) for k in self.msab_kernels)
        self.pagf_mode = PagfMode(self.pagf_mode).value
        if len(self.embed_dims) != 5 or min(self.embed_dims) < 1:
            raise ValueError(f"embed_dims must be 5 positive ints, got {self.embed_dims}")
        if len(self.man_depths) != 3 or min(self.man_depths) < 1:
            raise ValueError(f"man_depths must be 3 positive ints, got {self.man_depths}")
        if not self.msab_kernels or any(k % 2 == 0 or k < 1 for k in self.msab_kernels):
            raise ValueError(f"msab_kernels must be a non-empty set of odd ints, got {self.msab_kernels}")

    @classmethod
    def paper(cls, **overrides) -> NetworkConfig:
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> NetworkConfig:
        overrides.setdefault("embed_dims", DESK_DIMS)
        return cls(**overrides)

    @property
    def grid(self) -> SplineGrid:
        return SplineGrid(self.grid_size, self.spline_order, self.grid_lo, self.grid_hi)


class ConvStage(Module):
    """(conv3x3 -> BN -> ReLU) x 2."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = Conv2d(cin, cout, 3, rng, bias=False)
        self.bn1 = BatchNorm2d(cout)
        self.conv2 = Conv2d(cout, cout, 3, rng, bias=False)
        self.bn2 = BatchNorm2d(cout)

    def forward(self, x: Tensor) -> Tensor:
        x = relu(self.bn1(self.conv1(x)))
        return relu(self.bn2(self.conv2(x)))


class UMAN(Module):
    """Encoder: three conv stages (/2, /4, /8), MAN stage (/16), MAN bottleneck (/16).

    Decoder: MAN stage at /16 fused with the MAN encoder output, then three conv
    stages, each followed by x2 bilinear upsampling and PAGF fusion with the
    matching encoder map. A final x2 upsample restores the input resolution
    before the 1x1 head, which emits logits.
    """

    def __init__(self, config: NetworkConfig, seed: int = 0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        d1, d2, d3, d4, d5 = config.embed_dims
        k1, k2, k3 = config.man_depths
        man_kw = dict(
            kernel_sizes=config.msab_kernels,
            grid=config.grid,
            drop_path=config.drop_path,
            use_msab=config.use_msab,
        )
        mode = config.pagf_mode

        self.enc1 = ConvStage(config.input_channels, d1, rng)
        self.enc2 = ConvStage(d1, d2, rng)
        self.enc3 = ConvStage(d2, d3, rng)
        self.enc4 = MANStage(d3, d4, k1, rng, stride=2, **man_kw)
        self.bottleneck = MANStage(d4, d5, k2, rng, stride=1, **man_kw)

        self.dec4 = MANStage(d5, d4, k3, rng, stride=1, **man_kw)
        self.fuse4 = PAGF(d4, rng, mode, config.reduction)
        self.dec3 = ConvStage(d4, d3, rng)
        self.fuse3 = PAGF(d3, rng, mode, config.reduction)
        self.dec2 = ConvStage(d3, d2, rng)
        self.fuse2 = PAGF(d2, rng, mode, config.reduction)
        self.dec1 = ConvStage(d2, d1, rng)
        self.fuse1 = PAGF(d1, rng, mode, config.reduction)
        self.head = Conv2d(d1, config.num_classes, 1, rng, group="head")

        drop_seed = np.random.SeedSequence([seed, 1])
        blocks = [b for stage in (self.enc4, self.bottleneck, self.dec4) for b in stage.blocks]
        for blk, child in zip(blocks, drop_seed.spawn(len(blocks))):
            blk.drop_rng = np.random.default_rng(child)

    def encode(self, x: Tensor) -> list[Tensor]:
        e1 = ops.max_pool2x(self.enc1(x))
        e2 = ops.max_pool2x(self.enc2(e1))
        e3 = ops.max_pool2x(self.enc3(e2))
        e4 = self.enc4(e3)
        b = self.bottleneck(e4)
        return [e1, e2, e3, e4, b]

    def forward(self, x: Tensor, return_features: bool = False):
        n, c, h, w = x.shape
        if c != self.config.input_channels:
            raise DimensionError(f"expected {self.config.input_channels} input channels, got {c}")
        if h % 16 or w % 16:
            raise DimensionError(f"spatial dims must be divisible by 16, got {h}x{w}")
        feats = self.encode(x)
        e1, e2, e3, e4, b = feats
        y = self.fuse4(self.dec4(b), e4)
        y = self.fuse3(ops.bilinear_upsample2x(self.dec3(y)), e3)
        y = self.fuse2(ops.bilinear_upsample2x(self.dec2(y)), e2)
        y = self.fuse1(ops.bilinear_upsample2x(self.dec1(y)), e1)
        logits = self.head(ops.bilinear_upsample2x(y))
        return (logits, feats) if return_features else logits


def build_model(config: NetworkConfig, seed: int = 0) -> UMAN:
    return UMAN(config, seed)
