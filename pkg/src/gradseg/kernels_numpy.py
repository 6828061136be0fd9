"""Pure-numpy kernels for the hot operations.

Convolutions go through im2col + matmul so they hit BLAS; the transposed
convolution is fixed to kernel 2, stride 2 (non-overlapping), which reduces
to a reshape. All functions accept float32 or float64 arrays and preserve
the input dtype.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_fwd(x, w, b, pad):
    """Cross-correlate x (N,C,H,W) with w (F,C,KH,KW), stride 1."""
    N, C, H, W = x.shape
    F, _, KH, KW = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (KH, KW), axis=(2, 3))  # N,C,OH,OW,KH,KW
    OH, OW = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(N * OH * OW, C * KH * KW)
    y = cols @ w.reshape(F, -1).T
    y = y.reshape(N, OH, OW, F).transpose(0, 3, 1, 2)
    if b is not None:
        y = y + b[None, :, None, None]
    return np.ascontiguousarray(y)


def conv2d_bwd_input(dy, w, pad, H, W):
    """Gradient of conv2d_fwd w.r.t. x: full correlation with flipped w."""
    F, C, KH, KW = w.shape
    wf = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # C,F,KH,KW
    return conv2d_fwd(dy, np.ascontiguousarray(wf), None, KH - 1 - pad)


def conv2d_bwd_weight(x, dy, pad, KH, KW):
    """Gradient of conv2d_fwd w.r.t. w."""
    N, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (KH, KW), axis=(2, 3))
    return np.einsum("nchwij,nfhw->fcij", win, dy, optimize=True).astype(
        x.dtype, copy=False
    )


def convt2_fwd(x, w, b):
    """Transposed conv, kernel 2 stride 2: x (N,C,H,W), w (C,F,2,2)."""
    N, C, H, W = x.shape
    F = w.shape[1]
    y = np.einsum("nchw,cfij->nfhiwj", x, w, optimize=True)
    y = y.reshape(N, F, 2 * H, 2 * W)
    if b is not None:
        y = y + b[None, :, None, None]
    return np.ascontiguousarray(y.astype(x.dtype, copy=False))


def convt2_bwd_input(dy, w):
    N, F, H2, W2 = dy.shape
    C = w.shape[0]
    dyr = dy.reshape(N, F, H2 // 2, 2, W2 // 2, 2)
    return np.einsum("nfhiwj,cfij->nchw", dyr, w, optimize=True).astype(
        dy.dtype, copy=False
    )


def convt2_bwd_weight(x, dy):
    N, F, H2, W2 = dy.shape
    dyr = dy.reshape(N, F, H2 // 2, 2, W2 // 2, 2)
    return np.einsum("nchw,nfhiwj->cfij", x, dyr, optimize=True).astype(
        x.dtype, copy=False
    )


def maxpool2_fwd(x):
    """2x2 max pool, stride 2. Returns (y, idx) with idx in {0..3}.

    Ties break toward the earliest window position in row-major order,
    matching the strict-greater comparison of the numba kernel.
    """
    N, C, H, W = x.shape
    r = x.reshape(N, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = np.ascontiguousarray(r).reshape(N, C, H // 2, W // 2, 4)
    idx = np.argmax(flat, axis=-1).astype(np.uint8)
    y = np.take_along_axis(flat, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2_bwd(dy, idx, H, W):
    N, C, OH, OW = dy.shape
    flat = np.zeros((N, C, OH, OW, 4), dtype=dy.dtype)
    np.put_along_axis(flat, idx[..., None].astype(np.intp), dy[..., None], axis=-1)
    dx = flat.reshape(N, C, OH, OW, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx).reshape(N, C, H, W)
