import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from drpn.checkpoint import (
    CheckpointError,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    write_checkpoint,
)
from drpn.layer import init_layer


def assert_bit_identical(a, b):
    assert list(a) == list(b)
    for k in a:
        assert a[k].shape == b[k].shape
        assert a[k].tobytes() == b[k].tobytes()


def test_layer_round_trip(rng, tmp_path):
    tensors = init_layer(3, 3, rng).parameters()
    path = tmp_path / "layer.ckpt"
    write_checkpoint(path, tensors)
    assert_bit_identical(tensors, read_checkpoint(path))


def test_header_layout():
    blob = save_checkpoint({"a": np.array([[1.5, -2.0]])})
    assert blob[:4] == b"DRPN"
    assert struct.unpack("<HI", blob[4:10]) == (1, 1)
    assert struct.unpack("<H", blob[10:12]) == (1,)
    assert blob[12:13] == b"a"
    assert struct.unpack("<B2I", blob[13:22]) == (2, 1, 2)
    assert struct.unpack("<2d", blob[22:]) == (1.5, -2.0)


def test_empty_set():
    blob = save_checkpoint({})
    assert len(blob) == 10 and struct.unpack("<I", blob[6:10]) == (0,)
    assert load_checkpoint(blob) == {}


def test_special_values_preserved():
    arr = np.array([np.nan, np.inf, -0.0, 5e-324])
    out = load_checkpoint(save_checkpoint({"v": arr}))["v"]
    assert out.tobytes() == arr.tobytes()


def test_scalar_and_zero_size():
    tensors = {"s": np.array(3.0), "z": np.zeros((0, 4))}
    assert_bit_identical(tensors, load_checkpoint(save_checkpoint(tensors)))


def test_bad_magic():
    blob = bytearray(save_checkpoint({"a": np.ones(2)}))
    blob[0:4] = b"XXXX"
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(bytes(blob))


def test_version_mismatch():
    blob = bytearray(save_checkpoint({"a": np.ones(2)}))
    blob[4:6] = struct.pack("<H", 2)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(bytes(blob))


@pytest.mark.parametrize("cut", [3, 9, 11, 20, -1])
def test_truncated(cut):
    blob = save_checkpoint({"ab": np.ones((2, 2))})
    with pytest.raises(CheckpointError, match="truncated|magic"):
        load_checkpoint(blob[:cut])


def test_trailing_bytes():
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(save_checkpoint({"a": np.ones(1)}) + b"\0")


def test_duplicate_name_on_save():
    with pytest.raises(CheckpointError, match="duplicate"):
        save_checkpoint([("a", np.ones(1)), ("a", np.zeros(1))])


def test_duplicate_name_on_load():
    one = save_checkpoint({"a": np.ones(1)})
    blob = one[:6] + struct.pack("<I", 2) + one[10:] * 2
    with pytest.raises(CheckpointError, match="duplicate"):
        load_checkpoint(blob)


def test_empty_name():
    with pytest.raises(CheckpointError, match="non-empty"):
        save_checkpoint({"": np.ones(1)})


tensor_sets = st.dictionaries(
    st.text(min_size=1, max_size=12),
    hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=4, min_side=0, max_side=5)),
    max_size=6,
)


@settings(max_examples=60, deadline=None)
@given(tensor_sets)
def test_round_trip_property(tensors):
    assert_bit_identical(tensors, load_checkpoint(save_checkpoint(tensors)))
