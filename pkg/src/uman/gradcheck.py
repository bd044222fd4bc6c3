"""Central finite-difference checks of every differentiable layer.

Each registered check builds a small problem and returns a closure producing a
scalar loss together with the tensors to differentiate against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ops
from .kan import KANBlock, KANLayer, SplineGrid, bspline_basis
from .losses import LossConfig, bce_loss, dice_loss, total_loss
from .man import MANStage, MSAB
from .network import NetworkConfig, UMAN
from .nn import BatchNorm2d, Linear, list_groups
from .pagf import PAGF, ChannelAttention, SpatialAttention
from .tensor import Tensor, backward, mul, no_grad, record_branches, relu, sigmoid, silu, tsum

STEP = 1e-5
LAYER_TOL = 1e-4
NETWORK_TOL = 1e-3

Problem = tuple[Callable[[], Tensor], list[Tensor]]
CHECKS: dict[str, tuple[Callable[[np.random.Generator], Problem], float]] = {}


@dataclass
class GradcheckResult:
    name: str
    max_rel_error: float
    tol: float
    n_checked: int
    n_skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.n_checked > 0 and bool(self.max_rel_error < self.tol)


def register(name: str, tol: float = LAYER_TOL):
    def deco(fn):
        CHECKS[name] = (fn, tol)
        return fn

    return deco


def rel_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(numeric))


def _same_branches(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def central_difference(fn: Callable[[], Tensor], flat: np.ndarray, i: int, step: float = STEP) -> float | None:
    """(f(x+h) - f(x-h)) / 2h for element ``i``; None if the two points straddle a kink."""
    orig = flat[i]
    with no_grad():
        flat[i] = orig + step
        with record_branches() as plus:
            fp = fn().item()
        flat[i] = orig - step
        with record_branches() as minus:
            fm = fn().item()
    flat[i] = orig
    if not _same_branches(plus, minus):
        return None
    return (fp - fm) / (2 * step)


def check_gradients(
    fn: Callable[[], Tensor],
    inputs: list[Tensor],
    rng: np.random.Generator,
    step: float = STEP,
    max_elems: int = 64,
) -> tuple[float, int, int]:
    """Max element-wise relative error of autodiff vs central differences.

    Returns (max error, elements compared, elements skipped at kinks).
    """
    for t in inputs:
        t.grad = None
    backward(fn())
    worst, count, skipped = 0.0, 0, 0
    for t in inputs:
        analytic = (np.zeros_like(t.data) if t.grad is None else t.grad).reshape(-1)
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size) if flat.size <= max_elems else rng.choice(flat.size, max_elems, replace=False)
        for i in idx:
            fd = central_difference(fn, flat, i, step)
            if fd is None:
                skipped += 1
                continue
            worst = max(worst, float(rel_errors(analytic[i : i + 1], np.array([fd]))[0]))
            count += 1
    return worst, count, skipped


def _leaf(rng, shape, lo=None) -> Tensor:
    data = rng.normal(size=shape)
    if lo is not None:
        data = np.sign(data) * (lo + np.abs(data))
    return Tensor(data, requires_grad=True)


def _params(module) -> list[Tensor]:
    return [t for _, t, _ in module.named_parameters()]


@register("linear")
def _linear(rng):
    lin = Linear(5, 4, rng)
    lin.bias.data[:] = rng.normal(size=4)
    x = _leaf(rng, (3, 5))
    proj = Tensor(rng.normal(size=(3, 4)))
    return (lambda: tsum(mul(lin(x), proj))), [x, *_params(lin)]


@register("conv2d")
def _conv(rng):
    x, w, b = _leaf(rng, (2, 2, 5, 5)), _leaf(rng, (3, 2, 3, 3)), _leaf(rng, (3,))
    proj = Tensor(rng.normal(size=(2, 3, 5, 5)))
    return (lambda: tsum(mul(ops.conv2d(x, w, b, stride=1, pad=1), proj))), [x, w, b]


@register("conv2d_stride2")
def _conv_s2(rng):
    x, w, b = _leaf(rng, (1, 2, 6, 6)), _leaf(rng, (2, 2, 3, 3)), _leaf(rng, (2,))
    proj = Tensor(rng.normal(size=(1, 2, 3, 3)))
    return (lambda: tsum(mul(ops.conv2d(x, w, b, stride=2, pad=1), proj))), [x, w, b]


@register("conv2d_1x1")
def _conv1(rng):
    x, w, b = _leaf(rng, (2, 4, 3, 3)), _leaf(rng, (3, 4, 1, 1)), _leaf(rng, (3,))
    proj = Tensor(rng.normal(size=(2, 3, 3, 3)))
    return (lambda: tsum(mul(ops.conv2d(x, w, b), proj))), [x, w, b]


@register("depthwise_conv2d")
def _dw(rng):
    x, w = _leaf(rng, (2, 3, 5, 5)), _leaf(rng, (3, 1, 5, 5))
    proj = Tensor(rng.normal(size=(2, 3, 5, 5)))
    return (lambda: tsum(mul(ops.depthwise_conv2d(x, w, pad=2), proj))), [x, w]


@register("bilinear_upsample2x")
def _up(rng):
    x = _leaf(rng, (1, 2, 3, 4))
    proj = Tensor(rng.normal(size=(1, 2, 6, 8)))
    return (lambda: tsum(mul(ops.bilinear_upsample2x(x), proj))), [x]


@register("pools")
def _pools(rng):
    x = _leaf(rng, (2, 3, 4, 4))
    p1, p2, p3, p4 = (Tensor(rng.normal(size=s)) for s in [(2, 3, 2, 2), (2, 3, 1, 1), (2, 1, 4, 4), (2, 1, 4, 4)])

    def fn():
        return (
            tsum(mul(ops.max_pool2x(x), p1))
            + tsum(mul(ops.avg_pool_global(x), p2))
            + tsum(mul(ops.max_pool_channelwise(x), p3))
            + tsum(mul(ops.mean_channelwise(x), p4))
        )

    return fn, [x]


@register("activations")
def _acts(rng):
    x = _leaf(rng, (4, 6), lo=0.05)
    p = [Tensor(rng.normal(size=(4, 6))) for _ in range(3)]
    return (lambda: tsum(mul(relu(x), p[0])) + tsum(mul(silu(x), p[1])) + tsum(mul(sigmoid(x), p[2]))), [x]


@register("layer_norm")
def _ln(rng):
    x, g, b = _leaf(rng, (3, 2, 6)), _leaf(rng, (6,)), _leaf(rng, (6,))
    proj = Tensor(rng.normal(size=(3, 2, 6)))
    return (lambda: tsum(mul(ops.layer_norm(x, g, b), proj))), [x, g, b]


@register("batch_norm2d")
def _bn(rng):
    bn = BatchNorm2d(3)
    bn.gamma.data[:] = rng.normal(size=3)
    bn.beta.data[:] = rng.normal(size=3)
    x = _leaf(rng, (2, 3, 3, 3))
    proj = Tensor(rng.normal(size=(2, 3, 3, 3)))
    bn_eval = BatchNorm2d(3)
    bn_eval.running_mean[:] = rng.normal(size=3)
    bn_eval.running_var[:] = rng.uniform(0.5, 2.0, 3)
    bn_eval.eval()
    return (lambda: tsum(mul(bn(x), proj)) + tsum(mul(bn_eval(x), proj))), [x, *_params(bn), *_params(bn_eval)]


@register("bspline_basis")
def _basis(rng):
    x = Tensor(rng.uniform(-0.95, 0.95, (5, 3)), requires_grad=True)
    grid = SplineGrid(5, 3)
    proj = Tensor(rng.normal(size=(5, 3, grid.n_basis)))
    return (lambda: tsum(mul(bspline_basis(x, grid), proj))), [x]


@register("kan_layer")
def _kan(rng):
    layer = KANLayer(4, 3, rng, SplineGrid(5, 3))
    layer.spline_scaler.data[:] = rng.normal(size=(3, 4))
    x = Tensor(rng.uniform(-0.95, 0.95, (6, 4)), requires_grad=True)
    proj = Tensor(rng.normal(size=(6, 3)))
    return (lambda: tsum(mul(layer(x), proj))), [x, *_params(layer)]


@register("kan_block")
def _kan_block(rng):
    blk = KANBlock(4, rng, SplineGrid(5, 3))
    blk.eval()
    x = _leaf(rng, (2, 3, 4))
    proj = Tensor(rng.normal(size=(2, 3, 4)))
    return (lambda: tsum(mul(blk(x), proj))), [x, *_params(blk)]


def _perturb_bn(module, rng):
    """Random affine and running statistics, eval mode.

    Training-mode BN makes a following-after-scale composite (e.g. a 1x1
    depthwise conv) scale invariant, leaving near-zero gradients that finite
    differences cannot resolve; the batch-statistics path has its own check.
    """
    for name, t, _ in module.named_parameters():
        if name.endswith("gamma") or name.endswith("beta"):
            t.data[:] = t.data + 0.1 * rng.normal(size=t.shape)
    for name, arr in module.named_buffers():
        if name.endswith("running_mean"):
            arr[:] = 0.1 * rng.normal(size=arr.shape)
        elif name.endswith("running_var"):
            arr[:] = rng.uniform(0.5, 2.0, arr.shape)
    module.eval()


@register("msab")
def _msab(rng):
    m = MSAB(4, (1, 3), rng)
    _perturb_bn(m, rng)
    x = _leaf(rng, (2, 4, 4, 4))
    proj = Tensor(rng.normal(size=(2, 4, 4, 4)))
    return (lambda: tsum(mul(m(x), proj))), [x, *_params(m)]


@register("man_fusion")
def _man(rng):
    stage = MANStage(3, 4, 1, rng, stride=2, kernel_sizes=(1, 3))
    _perturb_bn(stage, rng)
    stage.w1.data[:] = 0.7
    stage.w2.data[:] = 1.3
    x = _leaf(rng, (2, 3, 6, 6))
    proj = Tensor(rng.normal(size=(2, 4, 3, 3)))
    return (lambda: tsum(mul(stage(x), proj))), [stage.w1, stage.w2, x, *_params(stage)]


@register("channel_attention")
def _ca(rng):
    ca = ChannelAttention(8, rng, reduction=4)
    ca.fc1.bias.data[:] = rng.normal(size=2)
    x = _leaf(rng, (2, 8, 3, 3))
    proj = Tensor(rng.normal(size=(2, 8, 1, 1)))
    return (lambda: tsum(mul(ca(x), proj))), [x, *_params(ca)]


@register("spatial_attention")
def _sa(rng):
    sa = SpatialAttention(rng)
    x = _leaf(rng, (2, 3, 5, 5))
    proj = Tensor(rng.normal(size=(2, 1, 5, 5)))
    return (lambda: tsum(mul(sa(x), proj))), [x, *_params(sa)]


@register("pagf")
def _pagf(rng):
    p = PAGF(4, rng, "full", reduction=2)
    _perturb_bn(p, rng)
    xd, xe = _leaf(rng, (2, 4, 4, 4)), _leaf(rng, (2, 4, 4, 4))
    proj = Tensor(rng.normal(size=(2, 4, 4, 4)))
    return (lambda: tsum(mul(p(xd, xe), proj))), [xd, xe, *_params(p)]


def _seg_problem(rng):
    z = _leaf(rng, (2, 1, 4, 4))
    y = (rng.random((2, 1, 4, 4)) < 0.5).astype(np.float64)
    return z, y


@register("dice_loss")
def _dice(rng):
    z, y = _seg_problem(rng)
    return (lambda: dice_loss(z, y)), [z]


@register("bce_loss")
def _bce(rng):
    z, y = _seg_problem(rng)
    return (lambda: bce_loss(z, y)), [z]


@register("total_loss")
def _total(rng):
    z, y = _seg_problem(rng)
    cfg = LossConfig(lambda_dice=0.7, lambda_bce=1.3)
    return (lambda: total_loss(z, y, cfg)), [z]


def network_problem(rng, config: NetworkConfig | None = None):
    config = config or NetworkConfig.desk()
    model = UMAN(config, seed=int(rng.integers(1 << 31)))
    x = Tensor(rng.normal(size=(2, config.input_channels, 32, 32)))
    y = (rng.random((2, config.num_classes, 32, 32)) < 0.3).astype(np.float64)
    return model, (lambda: total_loss(model(x), y)), x


def check_network(rng: np.random.Generator, per_group: int = 6) -> tuple[float, int, int]:
    """Sampled-parameter FD check of the whole network; inf if a group gets no gradient."""
    model, fn, _ = network_problem(rng)
    store = model.parameter_store()
    backward(fn())
    mass: dict[str, float] = {}
    for name, t in store.items():
        g = store.group_of(name)
        mass[g] = mass.get(g, 0.0) + float(np.abs(t.grad).sum())
    if set(mass) != set(list_groups(store)) or min(mass.values()) == 0.0:
        return float("inf"), 0, 0
    worst, count, skipped = 0.0, 0, 0
    names = list(store)
    for group in sorted(mass):
        members = [n for n in names if store.group_of(n) == group]
        for _ in range(per_group):
            t = store[members[rng.integers(len(members))]]
            i = int(rng.integers(t.size))
            fd = central_difference(fn, t.data.reshape(-1), i)
            if fd is None:
                skipped += 1
                continue
            worst = max(worst, float(rel_errors(t.grad.reshape(-1)[i : i + 1], np.array([fd]))[0]))
            count += 1
    return worst, count, skipped


def gradcheck(scope: str = "all", seed: int = 0) -> list[GradcheckResult]:
    names = list(CHECKS) + ["network"] if scope == "all" else [scope]
    results = []
    for name in names:
        rng = np.random.default_rng([seed, sum(name.encode())])
        if name == "network":
            err, n, skipped = check_network(rng)
            results.append(GradcheckResult(name, err, NETWORK_TOL, n, skipped))
            continue
        if name not in CHECKS:
            raise KeyError(f"unknown gradcheck scope {name!r}; choose from {', '.join(list(CHECKS) + ['network', 'all'])}")
        build, tol = CHECKS[name]
        fn, inputs = build(rng)
        err, n, skipped = check_gradients(fn, inputs, rng)
        results.append(GradcheckResult(name, err, tol, n, skipped))
    return results


def format_results(results: list[GradcheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'layer':<{width}}  {'max_rel_err':>12}  {'tol':>8}  {'n':>5}  {'kinks':>5}  status"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(
            f"{r.name:<{width}}  {r.max_rel_error:12.3e}  {r.tol:8.0e}  {r.n_checked:5d}  {r.n_skipped:5d}  {status}"
        )
    return "\n".join(lines)
