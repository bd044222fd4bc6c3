import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uman.pagf import PAGF, ChannelAttention, PagfMode, SpatialAttention, gated_fusion
from uman.tensor import DimensionError, Tensor, backward, mul, tsum


def rand(shape, seed=0):
    return Tensor(np.random.default_rng(seed).normal(size=shape))


def zero_params(module):
    for _, t, _ in module.named_parameters():
        t.data[:] = 0.0


def test_channel_attention_zero_weights_half():
    ca = ChannelAttention(8, np.random.default_rng(0))
    zero_params(ca)
    out = ca(rand((2, 8, 4, 4)))
    assert out.shape == (2, 8, 1, 1) and np.all(out.data == 0.5)


def test_channel_attention_reduction_clamps():
    ca = ChannelAttention(4, np.random.default_rng(0), reduction=8)
    assert ca.fc1.weight.shape == (4, 1)


def test_channel_attention_identical_channels():
    ca = ChannelAttention(4, np.random.default_rng(1))
    x = rand((1, 4, 5, 5)).data
    x[0, 2] = x[0, 1]
    out = ca(Tensor(x)).data
    swapped = ca(Tensor(x[:, [0, 2, 1, 3]])).data
    # swapping two identical channels leaves the input, hence the weights, unchanged
    np.testing.assert_array_equal(out, swapped)


def test_spatial_attention_examples():
    sa = SpatialAttention(np.random.default_rng(0))
    zero_params(sa)
    assert np.all(sa(rand((1, 5, 6, 6))).data == 0.5)
    sa = SpatialAttention(np.random.default_rng(0))
    for c in (1, 3, 7):
        assert sa(rand((2, c, 6, 5))).shape == (2, 1, 6, 5)


def test_spatial_attention_constant_input_interior_constant():
    sa = SpatialAttention(np.random.default_rng(0))
    sa.conv.weight.data[:] = np.random.default_rng(1).normal(size=sa.conv.weight.shape)
    out = sa(Tensor(np.full((1, 3, 12, 12), 0.7))).data[0, 0]
    # zero padding perturbs a 3-pixel border; the interior sees a constant field
    interior = out[3:-3, 3:-3]
    assert np.all(interior == interior[0, 0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_attention_bounds(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(scale=3.0, size=(1, 4, 5, 5)))
    assert np.all((ChannelAttention(4, rng)(x).data > 0) & (ChannelAttention(4, rng)(x).data < 1))
    sa = SpatialAttention(rng)(x).data
    assert np.all((sa > 0) & (sa < 1))


def test_gate_extremes_select_one_stream():
    x_d, x_e, a = rand((1, 2, 3, 3), 0), rand((1, 2, 3, 3), 1), Tensor(np.random.default_rng(2).uniform(size=(1, 2, 3, 3)))
    np.testing.assert_array_equal(gated_fusion(x_d, x_e, a, 1.0).data, x_d.data * a.data)
    np.testing.assert_array_equal(gated_fusion(x_d, x_e, a, 0.0).data, x_e.data * a.data)


def test_gated_fusion_arithmetic():
    out = gated_fusion(Tensor(np.full((1, 2, 2, 2), 2.0)), Tensor(np.full((1, 2, 2, 2), 4.0)), 1.0, 0.5)
    assert np.all(out.data == 3.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_convexity_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    p = PAGF(4, rng)
    x_d, x_e = Tensor(rng.normal(size=(1, 4, 5, 5))), Tensor(rng.normal(size=(1, 4, 5, 5)))
    attn, gate = p.maps(x_d, x_e)
    assert np.all((attn.data > 0) & (attn.data < 1)) and np.all((gate.data > 0) & (gate.data < 1))
    fused = gated_fusion(x_d, x_e, attn, gate).data
    a, b = x_d.data * attn.data, x_e.data * attn.data
    tol = 1e-12
    assert np.all(fused >= np.minimum(a, b) - tol) and np.all(fused <= np.maximum(a, b) + tol)
    swapped = gated_fusion(x_e, x_d, attn, Tensor(1.0 - gate.data)).data
    np.testing.assert_allclose(swapped, fused, atol=1e-12)


@pytest.mark.parametrize("mode", list(PagfMode))
def test_modes_preserve_shape(mode):
    p = PAGF(4, np.random.default_rng(0), mode)
    assert p(rand((2, 4, 6, 6), 1), rand((2, 4, 6, 6), 2)).shape == (2, 4, 6, 6)


def test_mode_submodules():
    built = {m: {n.split(".")[0] for n, _, _ in PAGF(4, np.random.default_rng(0), m).named_parameters()} for m in PagfMode}
    assert built[PagfMode.FULL] == {"combine", "channel_att", "spatial_att", "gate", "refine"}
    assert "channel_att" not in built[PagfMode.NO_CHANNEL]
    assert "spatial_att" not in built[PagfMode.NO_SPATIAL]
    assert "gate" not in built[PagfMode.NO_GATE]
    assert built[PagfMode.ADD_ONLY] == {"refine"}
    assert built[PagfMode.SIMPLE_SKIP] == {"reduce"}
    groups = {g for m in PagfMode for _, _, g in PAGF(4, np.random.default_rng(0), m).named_parameters()}
    assert groups == {"pagf"}


def test_no_gate_uses_half():
    p = PAGF(4, np.random.default_rng(0), PagfMode.NO_GATE)
    _, gate = p.maps(rand((1, 4, 3, 3)), rand((1, 4, 3, 3), 1))
    assert gate == 0.5


def test_add_only_pre_refine():
    p = PAGF(4, np.random.default_rng(0), PagfMode.ADD_ONLY)
    x_d, x_e = rand((1, 4, 3, 3)), rand((1, 4, 3, 3), 1)
    np.testing.assert_array_equal(p.pre_refine(x_d, x_e).data, x_d.data + x_e.data)


def test_gradients_reach_both_inputs():
    rng = np.random.default_rng(0)
    p = PAGF(4, rng)
    x_d = Tensor(rng.normal(size=(2, 4, 5, 5)), requires_grad=True)
    x_e = Tensor(rng.normal(size=(2, 4, 5, 5)), requires_grad=True)
    backward(tsum(mul(p(x_d, x_e), Tensor(rng.normal(size=(2, 4, 5, 5))))))
    assert np.abs(x_d.grad).sum() > 0 and np.abs(x_e.grad).sum() > 0


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        PAGF(4, np.random.default_rng(0))(rand((1, 4, 4, 4)), rand((1, 4, 5, 5)))
