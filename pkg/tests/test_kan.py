import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uman.gradcheck import check_gradients
from uman.kan import KANBlock, KANLayer, SplineGrid, bspline_basis
from uman.tensor import DimensionError, Tensor, mul, tsum


def cox_de_boor(i, k, x, t):
    """Textbook recursive B-spline, half-open support convention."""
    if k == 0:
        return 1.0 if t[i] <= x < t[i + 1] else 0.0
    left = (x - t[i]) / (t[i + k] - t[i]) * cox_de_boor(i, k - 1, x, t)
    right = (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * cox_de_boor(i + 1, k - 1, x, t)
    return left + right


def basis(x, grid):
    return bspline_basis(Tensor(np.asarray(x, dtype=np.float64)), grid).data


def test_grid_shape_and_validation():
    g = SplineGrid()
    assert len(g.knots) == g.grid_size + 2 * g.spline_order + 1
    assert g.n_basis == 8
    assert np.all(np.diff(g.knots) > 0)
    assert g.knots[0] == pytest.approx(-1 - 3 * 0.4) and g.knots[-1] == pytest.approx(1 + 3 * 0.4)
    with pytest.raises(ValueError):
        SplineGrid(grid_size=0)
    with pytest.raises(ValueError):
        SplineGrid(spline_order=-1)


@pytest.mark.parametrize("g", [3, 5, 8])
@pytest.mark.parametrize("s", [1, 2, 3])
def test_partition_of_unity(g, s):
    grid = SplineGrid(g, s)
    x = np.linspace(-1, 1, 1000)
    assert np.max(np.abs(basis(x, grid).sum(axis=-1) - 1.0)) < 1e-9


def test_degree_zero_is_indicator():
    grid = SplineGrid(5, 0)
    b = basis(np.linspace(-0.99, 0.99, 37), grid)
    assert np.all(b.sum(axis=-1) == 1.0)
    assert np.all(np.count_nonzero(b, axis=-1) == 1)


def test_cubic_matches_recursive_oracle():
    grid = SplineGrid(5, 3)
    t = grid.knots
    mids = (t[3:8] + t[4:9]) / 2  # interval midpoints inside [lo, hi]
    x = np.concatenate([mids, np.random.default_rng(0).uniform(-1, 1, 200)])
    ours = basis(x, grid)
    oracle = np.array([[cox_de_boor(i, 3, xi, t) for i in range(grid.n_basis)] for xi in x])
    assert np.max(np.abs(ours - oracle)) < 1e-12


def test_locality():
    grid = SplineGrid(5, 3)
    x = np.linspace(-2.2, 2.2, 4001)
    b = basis(x, grid)
    t = grid.knots
    for k in range(grid.n_basis):
        nz = x[b[:, k] > 0]
        assert nz.min() >= t[k] and nz.max() <= t[k + 4]


def test_kan_layer_spline_off_is_silu():
    layer = KANLayer(4, 4, np.random.default_rng(0))
    layer.spline_weight.data[:] = 0.0
    layer.base_weight.data[:] = np.eye(4)
    layer.spline_scaler.data[:] = 3.7
    x = np.random.default_rng(1).normal(size=(5, 4))
    np.testing.assert_allclose(layer(Tensor(x)).data, x / (1 + np.exp(-x)), atol=1e-15)


def test_kan_layer_all_off_is_zero():
    layer = KANLayer(3, 2, np.random.default_rng(0))
    layer.base_weight.data[:] = 0.0
    layer.spline_scaler.data[:] = 0.0
    assert not layer(Tensor(np.random.default_rng(2).normal(size=(4, 3)))).data.any()


def test_kan_layer_scalar_formula():
    grid = SplineGrid(5, 3)
    layer = KANLayer(1, 1, np.random.default_rng(11), grid)
    layer.spline_scaler.data[:] = 1.3
    x = 0.3
    silu = x / (1 + math.exp(-x))
    spline = sum(layer.spline_weight.data[0, 0, k] * cox_de_boor(k, 3, x, grid.knots) for k in range(grid.n_basis))
    expected = layer.base_weight.data[0, 0] * silu + 1.3 * spline
    assert layer(Tensor(np.array([[x]]))).item() == pytest.approx(expected, abs=1e-14)


def test_kan_layer_dim_mismatch():
    with pytest.raises(DimensionError):
        KANLayer(3, 2, np.random.default_rng(0))(Tensor(np.ones((2, 4))))


def test_kan_params_grouped():
    layer = KANLayer(3, 2, np.random.default_rng(0))
    groups = {name: g for name, _, g in layer.named_parameters()}
    assert groups == {"base_weight": "kan", "spline_weight": "kan", "spline_scaler": "kan"}
    assert layer.spline_weight.shape == (2, 3, 8)


def test_kan_layer_gradients():
    rng = np.random.default_rng(0)
    layer = KANLayer(4, 3, rng)
    x = Tensor(rng.uniform(-0.9, 0.9, (5, 4)), requires_grad=True)
    proj = Tensor(rng.normal(size=(5, 3)))
    params = [t for _, t, _ in layer.named_parameters()]
    err, n, _ = check_gradients(lambda: tsum(mul(layer(x), proj)), [x, *params], rng)
    assert n > 0 and err < 1e-4


def tokens(seed, shape=(2, 6, 4)):
    return Tensor(np.random.default_rng(seed).normal(size=shape))


def test_kan_block_deterministic_and_eval_matches_p0():
    x = tokens(0)
    a = KANBlock(4, np.random.default_rng(5), drop_path=0.0)
    assert a(x).data.tobytes() == a(x).data.tobytes()
    b = KANBlock(4, np.random.default_rng(5), drop_path=0.5).eval()
    np.testing.assert_array_equal(b(x).data, a(x).data)


def test_kan_block_drop_returns_input():
    x = tokens(1, (16, 3, 4))
    blk = KANBlock(4, np.random.default_rng(0), drop_path=0.99)
    blk.drop_rng = np.random.default_rng(42)
    out = blk(x).data
    dropped = [i for i in range(16) if np.array_equal(out[i], x.data[i])]
    assert len(dropped) >= 12


def test_kan_block_zero_params_is_identity():
    blk = KANBlock(4, np.random.default_rng(0))
    for _, t, _ in blk.named_parameters():
        t.data[:] = 0.0
    x = tokens(2)
    np.testing.assert_array_equal(blk(x).data, x.data)


def test_drop_path_range():
    with pytest.raises(ValueError):
        KANBlock(4, np.random.default_rng(0), drop_path=1.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 10), st.integers(0, 4), st.floats(-3, -0.5), st.floats(0.5, 3))
def test_partition_of_unity_any_range(g, s, lo, hi):
    grid = SplineGrid(g, s, lo, hi)
    x = np.linspace(lo, hi, 101)[:-1]
    assert np.max(np.abs(basis(x, grid).sum(axis=-1) - 1.0)) < 1e-9
