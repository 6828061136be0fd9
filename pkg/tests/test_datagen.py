"""Synthetic data generation, augmentation, and the dataset file format."""

import numpy as np
import pytest

from gradseg import datagen
from gradseg.datagen import (
    DatasetFormatError,
    DatasetSpec,
    augment,
    generate_dataset,
    generate_sample,
    load_dataset,
    save_dataset,
)
from gradseg.rng import RngStream


def test_spec_validation():
    with pytest.raises(ValueError):
        DatasetSpec(n_classes=1).validate()
    with pytest.raises(ValueError):
        DatasetSpec(height=8).validate()
    with pytest.raises(ValueError):
        DatasetSpec(n_train=0).validate()
    DatasetSpec().validate()


def test_all_classes_present_and_counts(tiny_dataset, tiny_spec):
    assert len(tiny_dataset.split("train")) == tiny_spec.n_train
    assert len(tiny_dataset.split("test")) == tiny_spec.n_test
    ids = [s.id for s in tiny_dataset.samples]
    assert len(set(ids)) == len(ids)
    for s in tiny_dataset.samples:
        present = set(np.unique(s.mask))
        assert present == set(range(tiny_spec.n_classes))


def test_normalization_invariant(tiny_dataset):
    for s in tiny_dataset.samples:
        assert abs(float(s.pixels.mean())) < 1e-4
        assert abs(float(s.pixels.std()) - 1.0) < 1e-3


def test_foreground_fraction_over_many_samples():
    spec = DatasetSpec(n_train=1000, n_test=1, seed=123)
    for i in range(1000):
        s = generate_sample(spec, i, "train")
        fg = float((s.mask >= 1).mean())
        assert 0.02 <= fg <= 0.40, f"sample {i}: fg fraction {fg}"


def test_generation_deterministic_bytes(tmp_path):
    spec = DatasetSpec(n_train=12, n_test=4, seed=9, height=16, width=16)
    for name in ("a", "b"):
        save_dataset(generate_dataset(spec), tmp_path / name)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_generation_order_independent():
    spec = DatasetSpec(n_train=8, n_test=1, seed=4, height=16, width=16)
    fwd = [generate_sample(spec, i, "train") for i in range(8)]
    rev = [generate_sample(spec, i, "train") for i in reversed(range(8))][::-1]
    for a, b in zip(fwd, rev):
        assert np.array_equal(a.pixels, b.pixels)
        assert np.array_equal(a.mask, b.mask)


def test_five_class_geometry():
    spec = DatasetSpec(n_train=5, n_test=1, n_classes=5, seed=2)
    for i in range(5):
        s = generate_sample(spec, i, "train")
        assert set(np.unique(s.mask)) == set(range(5))


# -- augmentation ----------------------------------------------------------------


def _flipped_case(sample):
    """Find a stream whose first draw triggers the flip."""
    for trial in range(100):
        rng = RngStream(trial, "aug")
        if rng.uniform() < 0.5:
            return RngStream(trial, "aug")
    raise AssertionError("no flipping stream found")


def _unflipped_case():
    for trial in range(100):
        rng = RngStream(trial, "aug")
        if rng.uniform() >= 0.5:
            return RngStream(trial, "aug")
    raise AssertionError("no non-flipping stream found")


def test_augment_requires_mask(tiny_dataset):
    s = tiny_dataset.samples[0].copy()
    s.mask = None
    with pytest.raises(ValueError, match="labeled"):
        augment(s, RngStream(0, "aug"))


def test_augment_flip_keeps_alignment(tiny_dataset):
    s = tiny_dataset.samples[0]
    out = augment(s, _flipped_case(s))
    assert np.array_equal(out.mask, s.mask[:, ::-1])
    # subtract the intensity offset: what remains is exactly the flipped image
    offset = out.pixels[0, 0] - s.pixels[0, -1]
    np.testing.assert_allclose(out.pixels - offset, s.pixels[:, ::-1], atol=1e-6)
    assert abs(offset) <= 0.1


def test_augment_flip_is_involution(tiny_dataset):
    s = tiny_dataset.samples[1]
    once = augment(s, _flipped_case(s))
    twice = augment(once, _flipped_case(s))
    assert np.array_equal(twice.mask, s.mask)


def test_augment_offset_constant(tiny_dataset):
    s = tiny_dataset.samples[2]
    out = augment(s, _unflipped_case())
    diff = out.pixels - s.pixels
    assert np.array_equal(out.mask, s.mask)
    assert float(diff.max() - diff.min()) < 1e-6
    assert abs(float(diff[0, 0])) <= 0.1


def test_augment_does_not_mutate_input(tiny_dataset):
    s = tiny_dataset.samples[3]
    pixels = s.pixels.copy()
    augment(s, RngStream(5, "aug"))
    assert np.array_equal(s.pixels, pixels)


# -- file format -------------------------------------------------------------------


def test_roundtrip(tmp_path, tiny_dataset):
    path = tmp_path / "d.gsad"
    save_dataset(tiny_dataset, path)
    loaded = load_dataset(path)
    assert loaded.spec == tiny_dataset.spec
    assert len(loaded.samples) == len(tiny_dataset.samples)
    for a, b in zip(loaded.samples, tiny_dataset.samples):
        assert (a.id, a.split) == (b.id, b.split)
        assert np.array_equal(a.pixels, b.pixels)
        assert np.array_equal(a.mask, b.mask)


def test_maskless_roundtrip(tmp_path, tiny_dataset):
    path = tmp_path / "u.gsad"
    save_dataset(tiny_dataset.without_masks(), path)
    loaded = load_dataset(path)
    assert all(s.mask is None for s in loaded.samples)
    assert np.array_equal(loaded.samples[0].pixels, tiny_dataset.samples[0].pixels)


def test_bad_magic(tmp_path, tiny_dataset):
    path = tmp_path / "d.gsad"
    save_dataset(tiny_dataset, path)
    raw = path.read_bytes()
    path.write_bytes(b"XXXXX" + raw[5:])
    with pytest.raises(DatasetFormatError, match="bad magic"):
        load_dataset(path)


def test_truncated_payload(tmp_path, tiny_dataset):
    path = tmp_path / "d.gsad"
    save_dataset(tiny_dataset, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    with pytest.raises(DatasetFormatError, match="truncated"):
        load_dataset(path)
