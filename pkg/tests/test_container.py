"""Named-tensor container: format layout and round trips."""

import json
import struct

import numpy as np
import pytest

from mwmae.container import load_tensors, save_tensors
from mwmae.errors import ContractError


def test_roundtrip_within_f32(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "embed.w": rng.normal(size=(4, 8)),
        "mask_token": rng.normal(size=(8,)),
        "scalarish": rng.normal(size=(1,)),
    }
    path = tmp_path / "t.bin"
    save_tensors(path, tensors)
    back = load_tensors(path)
    assert set(back) == set(tensors)
    for k, v in tensors.items():
        assert back[k].dtype == np.float64
        np.testing.assert_allclose(back[k], v, atol=1e-6)
        assert back[k].shape == v.shape


def test_header_layout(tmp_path):
    path = tmp_path / "t.bin"
    save_tensors(path, {"b": np.ones((2, 2)), "a": np.zeros(3)})
    raw = path.read_bytes()
    (head_len,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8:8 + head_len].decode("utf-8"))
    assert header["a"] == {"shape": [3], "dtype": "f32", "byte_offset": 0}
    assert header["b"] == {"shape": [2, 2], "dtype": "f32", "byte_offset": 12}
    payload = raw[8 + head_len:]
    assert len(payload) == (3 + 4) * 4
    vals = np.frombuffer(payload, dtype="<f4")
    np.testing.assert_array_equal(vals, [0, 0, 0, 1, 1, 1, 1])


def test_deterministic_bytes(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {"x": rng.normal(size=(5,)), "y": rng.normal(size=(2, 3))}
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_tensors(p1, tensors)
    save_tensors(p2, dict(reversed(list(tensors.items()))))
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_rejected(tmp_path):
    with pytest.raises(ContractError):
        save_tensors(tmp_path / "t.bin", {})
