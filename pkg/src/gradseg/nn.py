"""Layer building blocks shared by the VAE and the segmentation U-Net.

Parameters live in a flat ParamStore (name -> Tensor) so checkpointing,
Adam and finite-difference checks can treat a whole model as one named
tensor dict. Batch-statistics normalization keeps running mean/variance
buffers in the store (not trained, saved with checkpoints).
"""

import numpy as np

from .autodiff import Tensor, parameter

LEAK = 1e-2  # leaky-rectifier slope used throughout both networks
BN_EPS = 1e-5
BN_MOMENTUM = 0.9  # running = m*running + (1-m)*batch


class ParamStore:
    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params = {}
        self.buffers = {}

    def add(self, name, array):
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = parameter(np.asarray(array, dtype=self.dtype), name=name)
        self.params[name] = t
        return t

    def add_buffer(self, name, array):
        self.buffers[name] = np.asarray(array, dtype=self.dtype)
        return name

    def state_arrays(self):
        """All arrays (params then buffers) for checkpointing."""
        out = {n: t.data for n, t in self.params.items()}
        for n, a in self.buffers.items():
            out["buf/" + n] = a
        return out

    def load_state_arrays(self, arrays):
        for n, t in self.params.items():
            src = arrays[n]
            if tuple(src.shape) != t.data.shape:
                raise ValueError(f"shape mismatch loading {n!r}")
            t.data = src.astype(self.dtype)
        for n in self.buffers:
            self.buffers[n] = arrays["buf/" + n].astype(self.dtype)


class Conv2d:
    def __init__(self, store, name, cin, cout, k, rng, pad=None):
        scale = np.sqrt(2.0 / (cin * k * k))
        self.w = store.add(name + ".w", rng.normal((cout, cin, k, k)) * scale)
        self.b = store.add(name + ".b", np.zeros(cout))
        self.pad = (k - 1) // 2 if pad is None else pad

    def __call__(self, x):
        return x.conv2d(self.w, self.b, pad=self.pad)


class ConvTranspose2x2:
    """Upsampling transposed convolution, kernel 2, stride 2."""

    def __init__(self, store, name, cin, cout, rng):
        scale = np.sqrt(2.0 / (cin * 4))
        self.w = store.add(name + ".w", rng.normal((cin, cout, 2, 2)) * scale)
        self.b = store.add(name + ".b", np.zeros(cout))

    def __call__(self, x):
        return x.conv_transpose2x2(self.w, self.b)


class Linear:
    def __init__(self, store, name, nin, nout, rng):
        scale = np.sqrt(1.0 / nin)
        self.w = store.add(name + ".w", rng.normal((nin, nout)) * scale)
        self.b = store.add(name + ".b", np.zeros(nout))

    def __call__(self, x):
        return x.matmul(self.w) + self.b


class BatchNorm2d:
    """Per-channel batch normalization with learnable scale/shift.

    Training mode normalizes with the mini-batch statistics and updates
    running averages; inference mode normalizes with the running averages,
    making the output a pure function of a single input image.
    """

    def __init__(self, store, name, c):
        self.store = store
        self.c = c
        self.gamma = store.add(name + ".gamma", np.ones(c))
        self.beta = store.add(name + ".beta", np.zeros(c))
        self.rm = store.add_buffer(name + ".running_mean", np.zeros(c))
        self.rv = store.add_buffer(name + ".running_var", np.ones(c))

    def __call__(self, x, train):
        c = self.c
        if train:
            mu = x.mean(axis=(0, 2, 3), keepdims=True)
            var = ((x - mu) * (x - mu)).mean(axis=(0, 2, 3), keepdims=True)
            xhat = (x - mu) * (var + BN_EPS).pow(-0.5)
            buf = self.store.buffers
            m = BN_MOMENTUM
            buf[self.rm] = m * buf[self.rm] + (1 - m) * mu.data.reshape(c).astype(
                self.store.dtype
            )
            buf[self.rv] = m * buf[self.rv] + (1 - m) * var.data.reshape(c).astype(
                self.store.dtype
            )
        else:
            rm = self.store.buffers[self.rm].reshape(1, c, 1, 1)
            rv = self.store.buffers[self.rv].reshape(1, c, 1, 1)
            xhat = (x - Tensor(rm)) * Tensor(1.0 / np.sqrt(rv + BN_EPS))
        return xhat * self.gamma.reshape(1, c, 1, 1) + self.beta.reshape(1, c, 1, 1)


class ConvBNAct:
    def __init__(self, store, name, cin, cout, k, rng):
        self.conv = Conv2d(store, name + ".conv", cin, cout, k, rng)
        self.bn = BatchNorm2d(store, name + ".bn", cout)

    def __call__(self, x, train):
        return self.bn(self.conv(x), train).leaky_relu(LEAK)


class ResidualBlock:
    """conv-bn-act, conv-bn, plus identity (or 1x1 projection) skip."""

    def __init__(self, store, name, cin, cout, rng):
        self.c1 = Conv2d(store, name + ".c1", cin, cout, 3, rng)
        self.n1 = BatchNorm2d(store, name + ".n1", cout)
        self.c2 = Conv2d(store, name + ".c2", cout, cout, 3, rng)
        self.n2 = BatchNorm2d(store, name + ".n2", cout)
        self.proj = None
        if cin != cout:
            self.proj = Conv2d(store, name + ".proj", cin, cout, 1, rng)

    def __call__(self, x, train):
        h = self.n1(self.c1(x), train).leaky_relu(LEAK)
        h = self.n2(self.c2(h), train)
        skip = self.proj(x) if self.proj is not None else x
        return (h + skip).leaky_relu(LEAK)
