import struct

import numpy as np
import pytest

from uman import checkpoint
from uman.checkpoint import CheckpointError
from uman.network import UMAN, NetworkConfig
from uman.nn import IncompatibleStateError


def sample_state():
    rng = np.random.default_rng(0)
    return {"a.weight": rng.normal(size=(2, 3)), "b": np.array([1.5]), "c.running_var": rng.random((4, 1, 2))}


def test_layout_header():
    raw = checkpoint.encode({"w": np.array([[1.0, 2.0]])})
    assert raw[:5] == b"UMAN1"
    assert struct.unpack("<I", raw[5:9]) == (1,)
    assert struct.unpack("<H", raw[9:11]) == (1,) and raw[11:12] == b"w"
    assert raw[12] == 2 and struct.unpack("<2I", raw[13:21]) == (1, 2)
    assert np.frombuffer(raw[21:], "<f4").tolist() == [1.0, 2.0]


def test_round_trip_bit_exact_after_rounding():
    state = sample_state()
    decoded = checkpoint.decode(checkpoint.encode(state))
    assert list(decoded) == list(state)
    rounded = checkpoint.round_state(state)
    for k in state:
        assert decoded[k].shape == state[k].shape
        assert decoded[k].tobytes() == rounded[k].tobytes()
    # rounding is idempotent, so a second save/load changes nothing
    again = checkpoint.decode(checkpoint.encode(decoded))
    assert all(again[k].tobytes() == decoded[k].tobytes() for k in decoded)


@pytest.mark.parametrize("cut", [0, 3, 7, 10, 20, -1])
def test_truncation_rejected(cut):
    raw = checkpoint.encode(sample_state())
    with pytest.raises(CheckpointError):
        checkpoint.decode(raw[:cut] if cut >= 0 else raw[:-1])


def test_bad_magic_and_trailing_bytes():
    raw = checkpoint.encode(sample_state())
    with pytest.raises(CheckpointError):
        checkpoint.decode(b"XXXX1" + raw[5:])
    with pytest.raises(CheckpointError):
        checkpoint.decode(raw + b"\x00")


def test_duplicate_names_rejected():
    one = checkpoint.encode({"x": np.zeros(1)})
    body = one[9:]
    with pytest.raises(CheckpointError):
        checkpoint.decode(b"UMAN1" + struct.pack("<I", 2) + body + body)


def test_model_state_includes_buffers_and_fusion_scalars(tmp_path):
    model = UMAN(NetworkConfig.desk())
    checkpoint.save(tmp_path / "m.uman", model.state_dict())
    state = checkpoint.load(tmp_path / "m.uman")
    assert any(k.endswith("running_mean") for k in state)
    assert "enc4.w1" in state and "bottleneck.w2" in state


def test_incompatible_state_lists_names():
    state = UMAN(NetworkConfig.desk()).state_dict()
    other = UMAN(NetworkConfig.desk(pagf_mode="simple_skip"))
    with pytest.raises(IncompatibleStateError) as exc:
        other.load_state_dict(state)
    assert "fuse1.reduce.weight" in str(exc.value) and "fuse1.gate.weight" in str(exc.value)
    wide = UMAN(NetworkConfig.desk(embed_dims=(8, 16, 32, 40, 72)))
    with pytest.raises(IncompatibleStateError, match="bottleneck"):
        wide.load_state_dict(state)
