import numpy as np
import pytest

from uman import gradcheck
from uman.cli import main
from uman.gradcheck import CHECKS, LAYER_TOL, GradcheckResult, check_gradients, format_results, rel_errors
from uman.tensor import Tensor, make_op, mul, relu, tsum


def bad_square(x: Tensor) -> Tensor:
    # forward x^2, backward deliberately 1.9x instead of 2x
    return make_op(x.data**2, (x,), lambda g: (g * 1.9 * x.data,), "bad_square")


@pytest.fixture
def corrupted_check():
    def build(rng):
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        proj = Tensor(rng.normal(size=(3, 4)))
        return (lambda: tsum(mul(bad_square(x), proj))), [x]

    CHECKS["corrupted"] = (build, LAYER_TOL)
    yield "corrupted"
    del CHECKS["corrupted"]


def test_corrupted_backward_fails(corrupted_check):
    (result,) = gradcheck.gradcheck(corrupted_check)
    assert not result.passed
    assert result.max_rel_error == pytest.approx(0.05, rel=1e-3)
    assert "FAIL" in format_results([result])


def test_cli_exit_code_on_fail(corrupted_check, capsys):
    assert main(["gradcheck", "--scope", corrupted_check]) == 2
    assert capsys.readouterr().out.strip().endswith("FAIL")


def test_linear_is_near_exact():
    (result,) = gradcheck.gradcheck("linear")
    assert result.passed and result.max_rel_error < 1e-8


def test_kan_layer_passes():
    (result,) = gradcheck.gradcheck("kan_layer")
    assert result.passed and result.n_checked > 0


def test_every_layer_is_registered():
    expected = {
        "conv2d", "depthwise_conv2d", "layer_norm", "batch_norm2d", "kan_layer", "kan_block", "msab",
        "man_fusion", "channel_attention", "spatial_attention", "pagf", "dice_loss", "bce_loss", "total_loss",
    }
    assert expected <= set(CHECKS)


def test_unknown_scope():
    with pytest.raises(KeyError):
        gradcheck.gradcheck("nope")
    assert main(["gradcheck", "--scope", "nope"]) == 1


def test_rel_error_floor():
    assert rel_errors(np.array([1e-12]), np.array([0.0]))[0] == pytest.approx(1e-4)
    assert rel_errors(np.array([1.01]), np.array([1.0]))[0] == pytest.approx(0.01)


def test_result_requires_checked_elements():
    assert not GradcheckResult("x", 0.0, 1e-4, 0, 5).passed
    assert GradcheckResult("x", 1e-6, 1e-4, 3, 0).passed


def test_kinks_are_skipped_not_failed():
    # the first two entries sit within one FD step of the relu kink
    x = Tensor(np.array([1e-7, -2e-6, 0.5, -0.5]), requires_grad=True)
    err, n, skipped = check_gradients(lambda: tsum(relu(x)), [x], np.random.default_rng(0))
    assert skipped == 2 and n == 2 and err < 1e-8
