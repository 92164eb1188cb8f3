import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from acorl.checkpoint import (
    MAGIC,
    decode_container,
    encode_container,
    load_checkpoint,
    params_hash,
    round_f32,
    save_checkpoint,
)
from acorl.errors import IntegrityError
from acorl.nn import Model, ModelSpec, build_model
from acorl.rng import make_rng, normal

GOLDEN = Path(__file__).parent / "golden" / "tiny_classifier.ckpt"


def tiny_model() -> Model:
    spec = ModelSpec(2, (3,), "classifier", 2)
    return Model(spec, {
        "hidden.0.weight": np.array([[0.5, -1.0, 0.25], [1.5, 0.0, -0.125]]),
        "hidden.0.bias": np.array([0.0, 0.1, -0.2]),
        "head.weight": np.array([[1.0, -1.0], [0.5, 0.5], [-2.0, 3.0]]),
        "head.bias": np.array([0.3, -0.3]),
    })


def test_golden_bytes(tmp_path):
    save_checkpoint(tmp_path / "m.ckpt", tiny_model())
    assert (tmp_path / "m.ckpt").read_bytes() == GOLDEN.read_bytes()


def test_golden_layout():
    raw = GOLDEN.read_bytes()
    assert raw.startswith(MAGIC)
    length_line_end = raw.index(b"\n", len(MAGIC))
    size = int(raw[len(MAGIC):length_line_end])
    manifest = json.loads(raw[length_line_end + 1:length_line_end + 1 + size])
    blob = raw[length_line_end + 1 + size:]
    assert manifest["blob_bytes"] == len(blob) == 4 * 17
    assert manifest["blob_sha256"] == hashlib.sha256(blob).hexdigest()
    assert [p["offset"] for p in manifest["params"]] == [0, 24, 36, 60]
    assert np.frombuffer(blob[:4], "<f4")[0] == 0.5


def test_roundtrip_is_f32_rounded(tmp_path):
    model = build_model(ModelSpec(5, (7, 3), "embedding", 4), 3)
    save_checkpoint(tmp_path / "e.ckpt", model)
    back = load_checkpoint(tmp_path / "e.ckpt")
    assert back.spec == model.spec
    expected = round_f32(model.params)
    for k in model.params:
        assert back.params[k].tobytes() == expected[k].tobytes()
    x = normal(make_rng(0), (4, 5))
    np.testing.assert_allclose(back.forward(x).task_out.data, model.forward(x).task_out.data, atol=1e-5)


def test_same_model_same_bytes(tmp_path):
    model = build_model(ModelSpec(4, (3,), "classifier", 2), 0)
    save_checkpoint(tmp_path / "a.ckpt", model)
    save_checkpoint(tmp_path / "b.ckpt", model.copy())
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_truncated_blob_cites_offset():
    raw = GOLDEN.read_bytes()
    with pytest.raises(IntegrityError, match="byte offset 780"):
        decode_container(raw[:-5])


def test_corruptions_are_integrity_errors():
    raw = GOLDEN.read_bytes()
    with pytest.raises(IntegrityError, match="offset 0"):
        decode_container(b"XX" + raw[2:])
    with pytest.raises(IntegrityError, match="checksum"):
        decode_container(raw[:-1] + bytes([raw[-1] ^ 1]))
    with pytest.raises(IntegrityError, match="trailing"):
        decode_container(raw + b"\0")
    with pytest.raises(IntegrityError, match="manifest"):
        decode_container(raw[:40])


def test_spec_blob_mismatch(tmp_path):
    model = tiny_model()
    bad = dict(model.params)
    bad["head.bias"] = np.zeros(3)
    raw = encode_container({"kind": "model", "spec": model.spec.to_dict()}, bad)
    (tmp_path / "bad.ckpt").write_bytes(raw)
    with pytest.raises(IntegrityError, match="spec/blob length mismatch"):
        load_checkpoint(tmp_path / "bad.ckpt")


def test_params_hash_tracks_values():
    a = tiny_model().params
    b = {k: v.copy() for k, v in a.items()}
    assert params_hash(a) == params_hash(b)
    b["head.bias"][0] += 1e-12
    assert params_hash(a) != params_hash(b)
