"""Mini U-Net segmenter with multi-class soft Dice loss.

Encoder/decoder with skip connections and a channel-softmax head; trained
with Adam on the labeled subset, augmentation applied on the fly. The
input-gradient entry point backpropagates the Dice loss to the image,
using inference-mode normalization so the gradient depends only on the
single image and the parameters.
"""

from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .autodiff import Tensor, concat_channels
from .datagen import augment
from .nn import Conv2d, ConvBNAct, ConvTranspose2x2, ParamStore
from .optim import Adam
from .rng import RngStream

DICE_SMOOTH = 1e-6


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, detail):
        super().__init__(f"segmenter training diverged at epoch {epoch}: {detail}")
        self.epoch = epoch


class UNet:
    def __init__(
        self,
        height=32,
        width=32,
        n_classes=3,
        filters=(8, 16, 32, 64),
        bottleneck=128,
        seed=0,
        dtype=np.float32,
    ):
        levels = len(filters)
        if height % (1 << levels) or width % (1 << levels):
            raise ValueError("extents must be divisible by 2^levels")
        self.height, self.width = height, width
        self.n_classes = n_classes
        self.filters = tuple(filters)
        self.bottleneck = bottleneck
        self.seed = seed
        self.store = ParamStore(dtype)
        rng = RngStream(seed, "seg-init")

        self.enc = []
        cin = 1
        for i, c in enumerate(filters):
            self.enc.append(
                (
                    ConvBNAct(self.store, f"enc{i}a", cin, c, 3, rng),
                    ConvBNAct(self.store, f"enc{i}b", c, c, 3, rng),
                )
            )
            cin = c
        self.mid = (
            ConvBNAct(self.store, "mida", filters[-1], bottleneck, 3, rng),
            ConvBNAct(self.store, "midb", bottleneck, bottleneck, 3, rng),
        )
        self.dec = []
        prev = bottleneck
        for i in reversed(range(levels)):
            c = filters[i]
            self.dec.append(
                (
                    ConvTranspose2x2(self.store, f"up{i}", prev, c, rng),
                    ConvBNAct(self.store, f"dec{i}a", 2 * c, c, 3, rng),
                    ConvBNAct(self.store, f"dec{i}b", c, c, 3, rng),
                )
            )
            prev = c
        self.head = Conv2d(self.store, "head", prev, n_classes, 1, rng)

    def forward(self, x, train=False):
        """x: Tensor (N,1,H,W) -> per-pixel class probabilities (N,K,H,W)."""
        if x.shape[2] != self.height or x.shape[3] != self.width:
            raise ValueError(f"input extents {x.shape[2:]} != model extents")
        h = x
        skips = []
        for a, b in self.enc:
            h = b(a(h, train), train)
            skips.append(h)
            h = h.maxpool2()
        h = self.mid[1](self.mid[0](h, train), train)
        for (up, da, db), skip in zip(self.dec, reversed(skips)):
            h = concat_channels([up(h), skip])
            h = db(da(h, train), train)
        return self.head(h).softmax_channels()

    def to_bytes(self, meta_extra=None):
        meta = {
            "kind": "segmenter",
            "height": self.height,
            "width": self.width,
            "n_classes": self.n_classes,
            "filters": list(self.filters),
            "bottleneck": self.bottleneck,
            "seed": self.seed,
        }
        if meta_extra:
            meta.update(meta_extra)
        arrays = {"seg/" + k: v for k, v in self.store.state_arrays().items()}
        return checkpoint.tensors_to_bytes(arrays, meta)

    def save(self, path, meta_extra=None):
        with open(path, "wb") as f:
            f.write(self.to_bytes(meta_extra))

    @classmethod
    def from_bytes(cls, raw, dtype=np.float32):
        arrays, meta = checkpoint.tensors_from_bytes(raw)
        net = cls(
            height=meta["height"],
            width=meta["width"],
            n_classes=meta["n_classes"],
            filters=tuple(meta["filters"]),
            bottleneck=meta["bottleneck"],
            seed=meta.get("seed", 0),
            dtype=dtype,
        )
        net.store.load_state_arrays({k[len("seg/") :]: v for k, v in arrays.items()})
        return net

    @classmethod
    def load(cls, path, dtype=np.float32):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read(), dtype=dtype)


def one_hot(masks, n_classes, dtype=np.float32):
    """(N,H,W) integer labels -> (N,K,H,W) one-hot."""
    masks = np.asarray(masks)
    if masks.max(initial=0) >= n_classes:
        raise ValueError(f"label value >= n_classes ({n_classes})")
    out = np.zeros((masks.shape[0], n_classes) + masks.shape[1:], dtype=dtype)
    for k in range(n_classes):
        out[:, k] = masks == k
    return out


def dice_loss(yhat, masks, n_classes=None):
    """Soft multi-class Dice loss, averaged over classes and batch.

    yhat: Tensor (N,K,H,W) probabilities; masks: (N,H,W) integer labels.
    Per class: 2*sum(p*y) / (sum(p^2) + sum(y^2) + smooth), pixel sums;
    loss is the negated mean, in [-1, 0].
    """
    K = n_classes or yhat.shape[1]
    y = Tensor(one_hot(masks, K, dtype=yhat.dtype))
    inter = (yhat * y).sum(axis=(2, 3))
    psq = (yhat * yhat).sum(axis=(2, 3))
    ysq = y.data.sum(axis=(2, 3))
    dice = (inter * 2.0) / (psq + Tensor(ysq + DICE_SMOOTH))
    return -dice.mean()


@dataclass
class SegTrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 32
    use_augmentation: bool = True


def train_segmenter(net, labeled, config, shuffle_rng, augment_rng):
    """Fine-tune in place on (sample, mask) pairs; returns per-epoch losses.

    `labeled` is a list of ImageSamples whose .mask is the annotation to
    train on (the oracle ground truth or a human mask).
    """
    if not labeled:
        raise ValueError("labeled set is empty")
    dtype = net.store.dtype
    n = len(labeled)
    batch = min(config.batch_size, n)
    opt = Adam(net.store.params, lr=config.lr)
    history = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        for lo in range(0, n, batch):
            idx = order[lo : lo + batch]
            picked = [labeled[i] for i in idx]
            if config.use_augmentation:
                picked = [augment(s, augment_rng) for s in picked]
            xb = Tensor(np.stack([s.pixels for s in picked]).astype(dtype)[:, None])
            mb = np.stack([s.mask for s in picked])
            yhat = net.forward(xb, train=True)
            loss = dice_loss(yhat, mb, net.n_classes)
            if not np.isfinite(loss.item()):
                raise TrainingDiverged(epoch, "non-finite Dice loss")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    return history


def input_gradient(net, pixels, mask):
    """d(dice loss)/d(image) at the current parameters, inference mode."""
    if pixels.shape != (net.height, net.width):
        raise ValueError(f"image extents {pixels.shape} != model extents")
    x = Tensor(
        pixels.astype(net.store.dtype)[None, None].copy(), requires_grad=True
    )
    yhat = net.forward(x, train=False)
    loss = dice_loss(yhat, mask[None], net.n_classes)
    loss.backward()
    return x.grad[0, 0].copy()


def predict_probabilities(net, pixel_batch):
    """(N,H,W) images -> (N,K,H,W) probabilities, inference mode."""
    xb = Tensor(np.asarray(pixel_batch, dtype=net.store.dtype)[:, None])
    return net.forward(xb, train=False).data


def predict_mask(net, pixels):
    """Argmax decode of the probability map; ties go to the lowest class."""
    probs = predict_probabilities(net, pixels[None])[0]
    return argmax_mask(probs)


def argmax_mask(probs):
    return np.argmax(probs, axis=0).astype(np.uint8)
