"""Variational autoencoder that learns the latent manifold of the image pool.

Encoder: residual down-sampling levels ending in two linear heads (posterior
mean and log-variance). Decoder mirrors with transposed-convolution
up-sampling. The latent representation of a sample is the posterior mean,
so the latent table is deterministic. Loss is mean-pixel reconstruction MSE
plus the closed-form KL divergence to a standard normal.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .autodiff import Tensor
from .nn import LEAK, Conv2d, ConvTranspose2x2, Linear, ParamStore, ResidualBlock
from .optim import Adam
from .rng import RngStream

LATENT_MAGIC = b"GSLT1"


class LatentFormatError(RuntimeError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, term):
        super().__init__(f"non-finite {term} at epoch {epoch}")
        self.epoch = epoch


class Vae:
    def __init__(
        self, height=32, width=32, z_dim=3, filters=(8, 16, 32), seed=0, dtype=np.float32
    ):
        levels = len(filters)
        if height % (1 << levels) or width % (1 << levels):
            raise ValueError("extents must be divisible by 2^levels")
        self.height, self.width = height, width
        self.z_dim = z_dim
        self.filters = tuple(filters)
        self.seed = seed
        self.store = ParamStore(dtype)
        rng = RngStream(seed, "vae-init")

        self.enc_blocks = []
        cin = 1
        for i, c in enumerate(filters):
            self.enc_blocks.append(ResidualBlock(self.store, f"enc{i}", cin, c, rng))
            cin = c
        self.hb = height >> levels
        self.wb = width >> levels
        flat = filters[-1] * self.hb * self.wb
        self.fc_mu = Linear(self.store, "fc_mu", flat, z_dim, rng)
        self.fc_logvar = Linear(self.store, "fc_logvar", flat, z_dim, rng)

        self.fc_dec = Linear(self.store, "fc_dec", z_dim, flat, rng)
        self.dec_ups = []
        self.dec_blocks = []
        prev = filters[-1]
        for i in reversed(range(levels)):
            cout = filters[i - 1] if i > 0 else filters[0]
            self.dec_ups.append(ConvTranspose2x2(self.store, f"up{i}", prev, cout, rng))
            self.dec_blocks.append(
                ResidualBlock(self.store, f"dec{i}", cout, cout, rng)
            )
            prev = cout
        self.out_conv = Conv2d(self.store, "out", prev, 1, 1, rng)

    # -- core ----------------------------------------------------------------

    def encode(self, x, train=False):
        """x: Tensor (N,1,H,W) -> (mu, logvar), each (N,z_dim)."""
        if x.shape[2] != self.height or x.shape[3] != self.width:
            raise ValueError(f"input extents {x.shape[2:]} != model extents")
        h = x
        for block in self.enc_blocks:
            h = block(h, train).maxpool2()
        h = h.reshape(h.shape[0], -1)
        return self.fc_mu(h), self.fc_logvar(h)

    def decode(self, z, train=False):
        """z: Tensor (N,z_dim) -> reconstruction (N,1,H,W)."""
        if z.shape[1] != self.z_dim:
            raise ValueError(f"latent dim {z.shape[1]} != {self.z_dim}")
        h = self.fc_dec(z).leaky_relu(LEAK)
        h = h.reshape(z.shape[0], self.filters[-1], self.hb, self.wb)
        for up, block in zip(self.dec_ups, self.dec_blocks):
            h = block(up(h), train)
        return self.out_conv(h)

    def loss(self, x, eps, train=True):
        """Reconstruction error + KL, one reparameterized sample.

        The reconstruction term is the squared error summed over pixels and
        averaged over the batch, matching the per-sample sum in the KL term;
        a pixel-averaged reconstruction term lets the KL dominate at these
        resolutions and collapses the posterior. eps: Tensor or ndarray
        (N,z_dim) of standard normal noise. Returns (total, recon_value,
        kl_value).
        """
        if not isinstance(eps, Tensor):
            eps = Tensor(np.asarray(eps, dtype=self.store.dtype))
        mu, logvar = self.encode(x, train)
        sigma = (logvar * 0.5).exp()
        z = mu + sigma * eps
        recon = self.decode(z, train)
        mse = ((recon - x) * (recon - x)).sum(axis=(1, 2, 3)).mean()
        kl = kl_standard_normal(mu, logvar)
        if not np.isfinite(mse.item()):
            raise TrainingDiverged(-1, "reconstruction term")
        if not np.isfinite(kl.item()):
            raise TrainingDiverged(-1, "KL term")
        total = mse + kl
        return total, mse.item(), kl.item()

    # -- persistence -----------------------------------------------------------

    def save(self, path):
        meta = {
            "kind": "vae",
            "height": self.height,
            "width": self.width,
            "z_dim": self.z_dim,
            "filters": list(self.filters),
            "seed": self.seed,
        }
        arrays = {"vae/" + k: v for k, v in self.store.state_arrays().items()}
        checkpoint.save_tensors(path, arrays, meta)

    @classmethod
    def load(cls, path, dtype=np.float32):
        arrays, meta = checkpoint.load_tensors(path)
        vae = cls(
            height=meta["height"],
            width=meta["width"],
            z_dim=meta["z_dim"],
            filters=tuple(meta["filters"]),
            seed=meta.get("seed", 0),
            dtype=dtype,
        )
        vae.store.load_state_arrays(
            {k[len("vae/") :]: v for k, v in arrays.items()}
        )
        return vae


def kl_standard_normal(mu, logvar):
    """Closed-form KL(q||N(0,I)), summed per sample, averaged over batch."""
    per_dim = (mu * mu + logvar.exp() - logvar - 1.0) * 0.5
    return per_dim.sum(axis=1).mean()


@dataclass
class VaeTrainConfig:
    epochs: int = 50
    lr: float = 1e-4
    batch_size: int = 16
    seed: int = 0


def train_vae(samples, vae, config):
    """Train in place on an unlabeled pool; returns per-epoch mean losses."""
    n = len(samples)
    if n < config.batch_size:
        raise ValueError(f"pool size {n} < batch size {config.batch_size}")
    dtype = vae.store.dtype
    X = np.stack([s.pixels for s in samples]).astype(dtype)[:, None, :, :]
    shuffle = RngStream(config.seed, "vae-shuffle")
    noise = RngStream(config.seed, "vae-noise")
    opt = Adam(vae.store.params, lr=config.lr)
    history = []
    for epoch in range(config.epochs):
        order = shuffle.permutation(n)
        losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            xb = Tensor(np.ascontiguousarray(X[idx]))
            eps = noise.normal((len(idx), vae.z_dim), dtype=dtype)
            try:
                total, _, _ = vae.loss(xb, eps, train=True)
            except TrainingDiverged as e:
                raise TrainingDiverged(epoch, str(e)) from e
            opt.zero_grad()
            total.backward()
            opt.step()
            losses.append(total.item())
        mean_loss = float(np.mean(losses))
        if not np.isfinite(mean_loss):
            raise TrainingDiverged(epoch, "epoch mean loss")
        history.append(mean_loss)
    return history


# -- latent table --------------------------------------------------------------


@dataclass
class LatentTable:
    ids: list
    z: np.ndarray  # (N, z_dim) float32
    _lookup: dict = field(default=None, repr=False, compare=False)

    def vec(self, sample_id):
        if self._lookup is None:
            self._lookup = {i: k for k, i in enumerate(self.ids)}
        return self.z[self._lookup[sample_id]]

    def subset(self, ids):
        return np.stack([self.vec(i) for i in ids])


def encode_pool(vae, samples, batch_size=64):
    """Posterior-mean embedding of every sample, inference mode."""
    dtype = vae.store.dtype
    ids = [s.id for s in samples]
    rows = []
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo : lo + batch_size]
        xb = Tensor(np.stack([s.pixels for s in chunk]).astype(dtype)[:, None])
        mu, _ = vae.encode(xb, train=False)
        rows.append(mu.data.astype(np.float32))
    return LatentTable(ids, np.concatenate(rows, axis=0))


def save_latent_table(table, path):
    manifest = {"z_dim": int(table.z.shape[1]), "ids": [int(i) for i in table.ids]}
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(LATENT_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(table.z, dtype="<f4").tobytes())


def load_latent_table(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(LATENT_MAGIC)] != LATENT_MAGIC:
        raise LatentFormatError(f"bad magic in {path}")
    off = len(LATENT_MAGIC)
    (mlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    manifest = json.loads(raw[off : off + mlen].decode("utf-8"))
    off += mlen
    ids = manifest["ids"]
    z_dim = manifest["z_dim"]
    need = 4 * len(ids) * z_dim
    if len(raw) != off + need:
        raise LatentFormatError(f"payload length mismatch in {path}")
    z = np.frombuffer(raw[off:], dtype="<f4").reshape(len(ids), z_dim).copy()
    return LatentTable(ids, z)
