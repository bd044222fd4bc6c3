"""B-spline Kolmogorov-Arnold layers and the residual KANBlock."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import LayerNorm, Module
from .tensor import DimensionError, Tensor, make_op, matmul, mul, silu, transpose


@dataclass(frozen=True)
class SplineGrid:
    """Uniform knot grid on [lo, hi] extended by ``spline_order`` knots per side."""

    grid_size: int = 5
    spline_order: int = 3
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.grid_size < 1:
            raise ValueError(f"grid_size must be >= 1, got {self.grid_size}")
        if self.spline_order < 0:
            raise ValueError(f"spline_order must be >= 0, got {self.spline_order}")
        if not self.hi > self.lo:
            raise ValueError(f"empty range [{self.lo}, {self.hi}]")

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / self.grid_size

    @property
    def knots(self) -> np.ndarray:
        s, g = self.spline_order, self.grid_size
        return self.lo + self.step * np.arange(-s, g + s + 1, dtype=np.float64)

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.spline_order


def _basis_levels(x: np.ndarray, t: np.ndarray, order: int) -> list[np.ndarray]:
    # Cox-de Boor, vectorised over x; level d holds all degree-d bases
    xe = x[..., None]
    b = ((xe >= t[:-1]) & (xe < t[1:])).astype(np.float64)
    levels = [b]
    for d in range(1, order + 1):
        left = (xe - t[: -(d + 1)]) / (t[d:-1] - t[: -(d + 1)]) * b[..., :-1]
        right = (t[d + 1 :] - xe) / (t[d + 1 :] - t[1:-d]) * b[..., 1:]
        b = left + right
        levels.append(b)
    return levels


def bspline_basis(x: Tensor, grid: SplineGrid) -> Tensor:
    """Degree-``spline_order`` basis values, appended as a trailing axis of size G+s."""
    t = grid.knots
    s = grid.spline_order
    levels = _basis_levels(x.data, t, s)
    out = levels[-1]

    def bw(g):
        if s == 0:
            return (np.zeros_like(x.data),)
        lower = levels[-2]
        xe_shape = (1,) * x.ndim
        a = (s / (t[s:-1] - t[: -(s + 1)])).reshape(xe_shape + (-1,))
        c = (s / (t[s + 1 :] - t[1:-s])).reshape(xe_shape + (-1,))
        dbase = a * lower[..., :-1] - c * lower[..., 1:]
        return ((g * dbase).sum(axis=-1),)

    return make_op(out, (x,), bw, "bspline_basis")


class KANLayer(Module):
    """out_j = sum_i base_weight[j,i] silu(x_i) + spline_scaler[j,i] sum_k spline_weight[j,i,k] B_k(x_i)."""

    def __init__(self, din: int, dout: int, rng: np.random.Generator, grid: SplineGrid | None = None):
        super().__init__()
        self.grid = grid or SplineGrid()
        self.din, self.dout = din, dout
        bound = 1.0 / np.sqrt(din)
        k = self.grid.n_basis
        self.base_weight = self.param("base_weight", rng.uniform(-bound, bound, (dout, din)), "kan")
        self.spline_weight = self.param(
            "spline_weight", rng.normal(0.0, 0.1 * bound, (dout, din, k)), "kan"
        )
        self.spline_scaler = self.param("spline_scaler", np.ones((dout, din)), "kan")

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.din:
            raise DimensionError(f"KANLayer expects [N,{self.din}], got {x.shape}")
        n = x.shape[0]
        k = self.grid.n_basis
        base = matmul(silu(x), transpose(self.base_weight, (1, 0)))
        basis = bspline_basis(x, self.grid).reshape(n, self.din * k)
        scaled = mul(self.spline_weight, self.spline_scaler.reshape(self.dout, self.din, 1))
        spline = matmul(basis, transpose(scaled.reshape(self.dout, self.din * k), (1, 0)))
        return base + spline


class KANBlock(Module):
    """Residual token block: x + DropPath(KAN(LayerNorm(x)))."""

    def __init__(self, dim: int, rng: np.random.Generator, grid: SplineGrid | None = None, drop_path: float = 0.0):
        super().__init__()
        if not 0.0 <= drop_path < 1.0:
            raise ValueError(f"drop_path must be in [0, 1), got {drop_path}")
        self.drop_path = drop_path
        self.norm = LayerNorm(dim, group="kan")
        self.kan = KANLayer(dim, dim, rng, grid)
        self.drop_rng = np.random.default_rng(0)

    def forward(self, x: Tensor) -> Tensor:
        n, length, d = x.shape
        h = self.kan(self.norm(x).reshape(n * length, d)).reshape(n, length, d)
        if self.training and self.drop_path > 0.0:
            keep = (self.drop_rng.random(n) >= self.drop_path) / (1.0 - self.drop_path)
            h = mul(h, keep.reshape(n, 1, 1))
        return x + h
