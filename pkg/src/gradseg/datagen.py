"""Synthetic segmentation data: generation, augmentation, file format.

Each sample is a smoothly textured background with one lesion: an ellipse
(class 1) containing a concentric inner ellipse (class 2), plus additive
Gaussian noise. Lesions come in three phenotypes — stereotyped bright
high-contrast ones, and two lower-contrast kinds hidden among coreless
distractor ellipses of matching polarity — mixed in split-dependent
proportions (see MODE_WEIGHTS). Masks are exact by construction. Every
sample draws from its own RNG stream keyed by sample id, so generation
order does not matter.
"""

import json
import struct
from dataclasses import dataclass, asdict, field

import numpy as np

from .rng import RngStream

MAGIC = b"GSAD1"
_MAX_REDRAWS = 50


class DatasetFormatError(RuntimeError):
    pass


class GeometryError(RuntimeError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    n_train: int = 600
    n_test: int = 200
    height: int = 32
    width: int = 32
    n_classes: int = 3
    noise: float = 0.3
    seed: int = 0

    def validate(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.height < 16 or self.width < 16:
            raise ValueError("extents must be >= 16")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("sample counts must be >= 1")


@dataclass
class ImageSample:
    id: int
    pixels: np.ndarray  # (H,W) float32, z-scored
    mask: np.ndarray | None  # (H,W) uint8 labels in {0..K-1}, or None
    split: str  # "train" | "test"

    def copy(self):
        return ImageSample(
            self.id,
            self.pixels.copy(),
            None if self.mask is None else self.mask.copy(),
            self.split,
        )


@dataclass
class Dataset:
    spec: DatasetSpec
    samples: list = field(default_factory=list)

    def split(self, which):
        return [s for s in self.samples if s.split == which]

    def by_id(self, sample_id):
        return self._index()[sample_id]

    def _index(self):
        if not hasattr(self, "_idx"):
            self._idx = {s.id: s for s in self.samples}
        return self._idx

    def without_masks(self):
        """Unlabeled-pool view: same images and ids, masks dropped."""
        out = Dataset(self.spec)
        for s in self.samples:
            out.samples.append(ImageSample(s.id, s.pixels.copy(), None, s.split))
        return out


def _texture(rng, H, W):
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    bg = np.zeros((H, W))
    for _ in range(3):
        fy = rng.uniform(0.5, 2.0)
        fx = rng.uniform(0.5, 2.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        amp = rng.uniform(0.15, 0.45)
        bg += amp * np.cos(2 * np.pi * (fx * xx / W + fy * yy / H) + phase)
    return bg


def _ellipse_mask(H, W, cy, cx, a, b, theta):
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    ct, st = np.cos(theta), np.sin(theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


# Phenotype mix per split: (easy, dark, occult). The evaluation split
# deliberately oversamples the two difficult phenotypes: the pool is
# dominated by stereotyped bright lesions a model learns from a handful of
# labels, while the score hinges on mastering the dark lesions and the rare
# occult ones, so it rewards annotation strategies that spend their label
# budget on the hard cases.
MODE_WEIGHTS = {"train": (0.81, 0.15, 0.04), "test": (0.12, 0.53, 0.35)}


def _draw_sample(rng, spec, mode_weights):
    H, W = spec.height, spec.width
    bg = _texture(rng, H, W)
    theta = rng.uniform(0.0, np.pi)

    # Three lesion phenotypes. "easy" is bright, high-contrast and nearly
    # stereotyped, so a handful of labels suffices for it. "dark" and
    # "occult" are lower-contrast and surrounded by distractor ellipses of
    # the same polarity that carry no core and stay labeled background, so
    # the lesion is only distinguishable by its concentric structure; the
    # occult phenotype is the bright-polarity counterpart of the dark one.
    u = rng.uniform()
    p_easy, p_dark, _ = mode_weights
    phenotype = "easy" if u < p_easy else ("dark" if u < p_easy + p_dark else "occult")
    img = bg
    if phenotype == "easy":
        cy = rng.uniform(0.45, 0.55) * H
        cx = rng.uniform(0.45, 0.55) * W
        r = rng.uniform(0.23, 0.25)
        a = r * W
        b = r * H
        inner_scale = 0.5
        c_outer = rng.uniform(3.0, 3.5)
        c_inner = rng.uniform(1.4, 1.6)
    else:
        sign = -1.0 if phenotype == "dark" else 1.0
        cy = rng.uniform(0.32, 0.68) * H
        cx = rng.uniform(0.32, 0.68) * W
        a = rng.uniform(0.20, 0.26) * W
        b = rng.uniform(0.20, 0.26) * H
        inner_scale = rng.uniform(0.45, 0.55)
        c_outer = sign * rng.uniform(0.9, 1.05) * (1.0 if sign < 0 else 1.35)
        c_inner = rng.uniform(0.6, 0.9) * (1.0 if rng.uniform() < 0.5 else -1.0)
        for _ in range(int(rng.integers(3, 6))):
            dcy = rng.uniform(0.08, 0.92) * H
            dcx = rng.uniform(0.08, 0.92) * W
            da = rng.uniform(0.08, 0.18) * W
            db = rng.uniform(0.08, 0.18) * H
            dth = rng.uniform(0.0, np.pi)
            dc = sign * rng.uniform(0.9, 1.05) * (1.0 if sign < 0 else 1.35)
            img = img + dc * _ellipse_mask(H, W, dcy, dcx, da, db, dth).astype(
                np.float64
            )

    # K-1 concentric ellipses, scales interpolating 1 -> inner_scale; the
    # innermost is the core, the outermost the full lesion
    K = spec.n_classes
    scales = np.linspace(1.0, inner_scale, K - 1)
    mask = np.zeros((H, W), dtype=np.uint8)
    for j, s in enumerate(scales, start=1):
        region = _ellipse_mask(H, W, cy, cx, a * s, b * s, theta)
        mask[region] = j
        img = img + (c_outer if j == 1 else c_inner / (K - 2)) * region.astype(
            np.float64
        )
    img += spec.noise * rng.normal((H, W))
    return img, mask


def generate_sample(spec, sample_id, split):
    rng = RngStream(spec.seed, f"sample-{sample_id}")
    weights = MODE_WEIGHTS[split]
    for _ in range(_MAX_REDRAWS):
        img, mask = _draw_sample(rng, spec, weights)
        counts = np.bincount(mask.reshape(-1), minlength=spec.n_classes)
        fg = counts[1:].sum() / mask.size
        if counts.min() == 0 or not (0.02 <= fg <= 0.40):
            continue
        mu, sigma = img.mean(), img.std()
        pixels = ((img - mu) / sigma).astype(np.float32)
        return ImageSample(sample_id, pixels, mask, split)
    raise GeometryError(
        f"sample {sample_id}: no valid geometry after {_MAX_REDRAWS} redraws"
    )


def generate_dataset(spec):
    spec.validate()
    ds = Dataset(spec)
    for i in range(spec.n_train):
        ds.samples.append(generate_sample(spec, i, "train"))
    for i in range(spec.n_test):
        ds.samples.append(generate_sample(spec, spec.n_train + i, "test"))
    return ds


def augment(sample, rng):
    """Horizontal flip with probability 0.5 plus a global intensity offset.

    Supervised-training augmentation only; requires a mask so image and
    labels stay aligned through the flip.
    """
    if sample.mask is None:
        raise ValueError("augment requires a labeled sample")
    out = sample.copy()
    if rng.uniform() < 0.5:
        out.pixels = out.pixels[:, ::-1].copy()
        out.mask = out.mask[:, ::-1].copy()
    offset = rng.uniform(-0.1, 0.1)
    out.pixels = out.pixels + np.float32(offset)
    return out


# -- file format --------------------------------------------------------------


def save_dataset(dataset, path):
    entries = []
    payload = bytearray()
    for s in dataset.samples:
        pix_off = len(payload)
        payload += np.ascontiguousarray(s.pixels, dtype="<f4").tobytes()
        lab_off = None
        if s.mask is not None:
            lab_off = len(payload)
            payload += np.ascontiguousarray(s.mask, dtype=np.uint8).tobytes()
        entries.append(
            {"id": s.id, "split": s.split, "pix_off": pix_off, "lab_off": lab_off}
        )
    manifest = {"spec": asdict(dataset.spec), "samples": entries}
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(bytes(payload))


def load_dataset(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(MAGIC)] != MAGIC:
        raise DatasetFormatError(f"bad magic in {path}")
    off = len(MAGIC)
    if len(raw) < off + 8:
        raise DatasetFormatError(f"truncated header in {path}")
    (mlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if len(raw) < off + mlen:
        raise DatasetFormatError(f"truncated manifest in {path}")
    try:
        manifest = json.loads(raw[off : off + mlen].decode("utf-8"))
    except ValueError as e:
        raise DatasetFormatError(f"unreadable manifest in {path}: {e}") from e
    base = off + mlen
    spec = DatasetSpec(**manifest["spec"])
    H, W = spec.height, spec.width
    npix = 4 * H * W
    ds = Dataset(spec)
    for e in manifest["samples"]:
        po = base + e["pix_off"]
        if len(raw) < po + npix:
            raise DatasetFormatError(f"truncated pixel payload for id {e['id']}")
        pixels = np.frombuffer(raw[po : po + npix], dtype="<f4").reshape(H, W).copy()
        mask = None
        if e["lab_off"] is not None:
            lo = base + e["lab_off"]
            if len(raw) < lo + H * W:
                raise DatasetFormatError(f"truncated label payload for id {e['id']}")
            mask = (
                np.frombuffer(raw[lo : lo + H * W], dtype=np.uint8).reshape(H, W).copy()
            )
        ds.samples.append(ImageSample(e["id"], pixels, mask, e["split"]))
    return ds
