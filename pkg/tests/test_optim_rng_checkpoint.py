"""Adam optimizer, labelled RNG streams, and the tensor checkpoint format."""

import numpy as np
import pytest

from gradseg.autodiff import parameter
from gradseg.checkpoint import (
    CheckpointError,
    load_tensors,
    save_tensors,
    tensors_from_bytes,
    tensors_to_bytes,
)
from gradseg.optim import Adam, NonFiniteGradient
from gradseg.rng import RngStream

# -- Adam ----------------------------------------------------------------------


def test_adam_zero_gradient_fixed_point():
    p = parameter(np.arange(4.0))
    opt = Adam({"p": p})
    before = p.data.copy()
    p.grad = np.zeros(4)
    opt.step()
    p.grad = None  # missing gradient also leaves the parameter alone
    opt.step()
    assert np.array_equal(p.data, before)


def test_adam_zero_lr_fixed_point():
    p = parameter(np.arange(4.0))
    opt = Adam({"p": p}, lr=0.0)
    p.grad = np.ones(4)
    opt.step()
    assert np.array_equal(p.data, np.arange(4.0))


def test_adam_scalar_first_step():
    # mhat = vhat = 1 at t=1, so the update is -lr / (1 + eps)
    p = parameter(np.array(0.0))
    opt = Adam({"p": p})
    p.grad = np.array(1.0)
    opt.step()
    assert opt.t == 1
    assert float(p.data) == pytest.approx(-9.99999e-4, rel=1e-5)


def test_adam_nonfinite_gradient_names_parameter():
    p = parameter(np.zeros(2))
    opt = Adam({"weights": p})
    p.grad = np.array([1.0, np.nan])
    with pytest.raises(NonFiniteGradient, match="weights") as exc:
        opt.step()
    assert exc.value.param_name == "weights"


def test_adam_shape_mismatch():
    p = parameter(np.zeros(2))
    opt = Adam({"p": p})
    p.grad = np.zeros(3)
    with pytest.raises(ValueError, match="shape"):
        opt.step()


def test_adam_reset():
    p = parameter(np.array(0.0))
    opt = Adam({"p": p})
    p.grad = np.array(1.0)
    opt.step()
    opt.reset()
    assert opt.t == 0
    assert np.all(opt.m["p"] == 0.0) and np.all(opt.v["p"] == 0.0)


# -- RngStream -------------------------------------------------------------------


def test_stream_determinism():
    a = RngStream(42, "init").uniform(size=32)
    b = RngStream(42, "init").uniform(size=32)
    assert np.array_equal(a, b)


def test_different_labels_diverge_quickly():
    a = RngStream(42, "init").uniform(size=64)
    b = RngStream(42, "augment").uniform(size=64)
    assert np.any(a != b)


def test_different_seeds_diverge():
    a = RngStream(1, "x").uniform(size=64)
    b = RngStream(2, "x").uniform(size=64)
    assert np.any(a != b)


def test_state_roundtrip_continues_sequence():
    s = RngStream(7, "resume")
    s.uniform(size=13)  # advance mid-sequence
    blob = s.get_state()
    rest_a = s.uniform(size=20)
    rest_b = RngStream.from_state(blob).uniform(size=20)
    assert np.array_equal(rest_a, rest_b)


def test_state_is_json_roundtrippable():
    import json

    s = RngStream(7, "json")
    s.normal((5,))
    blob = json.loads(json.dumps(s.get_state()))
    assert np.array_equal(
        RngStream.from_state(blob).uniform(size=8), s.uniform(size=8)
    )


# -- checkpoint format -----------------------------------------------------------


def _tensors():
    rng = RngStream(3, "ckpt")
    return {
        "b/bias": rng.normal((4,), dtype=np.float32),
        "a/weight": rng.normal((2, 3), dtype=np.float32),
        "scalar": np.float32(1.5).reshape(()),
    }


def test_checkpoint_roundtrip(tmp_path):
    tensors = _tensors()
    path = tmp_path / "t.ckpt"
    save_tensors(path, tensors, meta={"kind": "test", "n": 3})
    loaded, meta = load_tensors(path)
    assert meta == {"kind": "test", "n": 3}
    assert set(loaded) == set(tensors)
    for k in tensors:
        assert loaded[k].shape == tensors[k].shape
        assert np.array_equal(loaded[k], tensors[k].astype(np.float32))


def test_checkpoint_bytes_deterministic():
    tensors = _tensors()
    reordered = dict(sorted(tensors.items(), reverse=True))
    assert tensors_to_bytes(tensors) == tensors_to_bytes(reordered)


def test_checkpoint_bad_magic():
    raw = tensors_to_bytes(_tensors())
    with pytest.raises(CheckpointError, match="bad magic"):
        tensors_from_bytes(b"XXXXX" + raw[5:])


def test_checkpoint_truncated_payload():
    raw = tensors_to_bytes(_tensors())
    with pytest.raises(CheckpointError, match="truncated"):
        tensors_from_bytes(raw[:-3])


def test_checkpoint_length_mismatch():
    raw = tensors_to_bytes(_tensors())
    with pytest.raises(CheckpointError, match="mismatch"):
        tensors_from_bytes(raw + b"\x00\x00\x00\x00")


def test_checkpoint_truncated_header():
    with pytest.raises(CheckpointError, match="truncated"):
        tensors_from_bytes(b"GSCP1\x01")
