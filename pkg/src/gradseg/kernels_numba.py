"""Numba @njit kernels mirroring kernels_numpy.

Inputs are padded up front so the inner loops are branch-free and
SIMD-friendly; single-threaded, so accumulation order is fixed and results
are bitwise reproducible run-to-run. Signatures and semantics match
kernels_numpy (see there for conventions).
"""

import numpy as np
from numba import njit


def _pad(x, pad):
    if pad == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


@njit(cache=True, fastmath=True)
def _conv2d_valid(xp, w):
    N, C, Hp, Wp = xp.shape
    F, _, KH, KW = w.shape
    OH = Hp - KH + 1
    OW = Wp - KW + 1
    y = np.zeros((N, F, OH, OW), dtype=xp.dtype)
    for n in range(N):
        for f in range(F):
            for c in range(C):
                for i in range(KH):
                    for j in range(KW):
                        wv = w[f, c, i, j]
                        for h in range(OH):
                            for ww in range(OW):
                                y[n, f, h, ww] += wv * xp[n, c, h + i, ww + j]
    return y


@njit(cache=True, fastmath=True)
def _conv2d_valid_smallhw(xp, wt):
    # channel-innermost variant for small output extents: wt is (KH,KW,F,C)
    # so the reduction over C runs over contiguous memory
    N, C, Hp, Wp = xp.shape
    KH, KW, F, _ = wt.shape
    OH = Hp - KH + 1
    OW = Wp - KW + 1
    y = np.zeros((N, F, OH, OW), dtype=xp.dtype)
    buf = np.empty(C, dtype=xp.dtype)
    for n in range(N):
        for oh in range(OH):
            for ow in range(OW):
                for i in range(KH):
                    for j in range(KW):
                        for c in range(C):
                            buf[c] = xp[n, c, oh + i, ow + j]
                        for f in range(F):
                            acc = 0.0
                            for c in range(C):
                                acc += wt[i, j, f, c] * buf[c]
                            y[n, f, oh, ow] += acc
    return y


_SMALL_HW = 64  # below this many output pixels the channel-inner kernel wins


def _conv_valid(xp, w):
    OH = xp.shape[2] - w.shape[2] + 1
    OW = xp.shape[3] - w.shape[3] + 1
    if OH * OW <= _SMALL_HW and w.shape[1] >= 16:
        wt = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
        return _conv2d_valid_smallhw(xp, wt)
    return _conv2d_valid(xp, np.ascontiguousarray(w))


def conv2d_fwd(x, w, b, pad):
    y = _conv_valid(_pad(x, pad), w)
    if b is not None:
        y += b[None, :, None, None]
    return y


def conv2d_bwd_input(dy, w, pad, H, W):
    F, C, KH, KW = w.shape
    wf = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return _conv_valid(_pad(dy, KH - 1 - pad), wf)


@njit(cache=True, fastmath=True)
def _conv2d_dw(xp, dy, KH, KW):
    N, C, Hp, Wp = xp.shape
    F = dy.shape[1]
    OH, OW = dy.shape[2], dy.shape[3]
    dw = np.zeros((F, C, KH, KW), dtype=xp.dtype)
    for n in range(N):
        for f in range(F):
            for c in range(C):
                for i in range(KH):
                    for j in range(KW):
                        acc = 0.0
                        for h in range(OH):
                            for ww in range(OW):
                                acc += xp[n, c, h + i, ww + j] * dy[n, f, h, ww]
                        dw[f, c, i, j] += acc
    return dw


@njit(cache=True, fastmath=True)
def _conv2d_dw_smallhw(xp, dy, KH, KW):
    # outer-product accumulation per output position; contiguous over C
    N, C, Hp, Wp = xp.shape
    F = dy.shape[1]
    OH, OW = dy.shape[2], dy.shape[3]
    dwt = np.zeros((KH, KW, F, C), dtype=xp.dtype)
    buf = np.empty(C, dtype=xp.dtype)
    for n in range(N):
        for oh in range(OH):
            for ow in range(OW):
                for i in range(KH):
                    for j in range(KW):
                        for c in range(C):
                            buf[c] = xp[n, c, oh + i, ow + j]
                        for f in range(F):
                            g = dy[n, f, oh, ow]
                            for c in range(C):
                                dwt[i, j, f, c] += g * buf[c]
    return dwt


def conv2d_bwd_weight(x, dy, pad, KH, KW):
    xp = _pad(x, pad)
    dy = np.ascontiguousarray(dy)
    if dy.shape[2] * dy.shape[3] <= _SMALL_HW and x.shape[1] >= 16:
        dwt = _conv2d_dw_smallhw(xp, dy, KH, KW)
        return np.ascontiguousarray(dwt.transpose(2, 3, 0, 1))
    return _conv2d_dw(xp, dy, KH, KW)


@njit(cache=True, fastmath=True)
def _convt2_core(x, w):
    N, C, H, W = x.shape
    F = w.shape[1]
    y = np.zeros((N, F, 2 * H, 2 * W), dtype=x.dtype)
    for n in range(N):
        for c in range(C):
            for f in range(F):
                for h in range(H):
                    for ww in range(W):
                        v = x[n, c, h, ww]
                        y[n, f, 2 * h, 2 * ww] += v * w[c, f, 0, 0]
                        y[n, f, 2 * h, 2 * ww + 1] += v * w[c, f, 0, 1]
                        y[n, f, 2 * h + 1, 2 * ww] += v * w[c, f, 1, 0]
                        y[n, f, 2 * h + 1, 2 * ww + 1] += v * w[c, f, 1, 1]
    return y


def convt2_fwd(x, w, b):
    y = _convt2_core(x, w)
    if b is not None:
        y += b[None, :, None, None]
    return y


@njit(cache=True, fastmath=True)
def convt2_bwd_input(dy, w):
    N, F, H2, W2 = dy.shape
    C = w.shape[0]
    H, W = H2 // 2, W2 // 2
    dx = np.zeros((N, C, H, W), dtype=dy.dtype)
    for n in range(N):
        for c in range(C):
            for f in range(F):
                for h in range(H):
                    for ww in range(W):
                        acc = dy[n, f, 2 * h, 2 * ww] * w[c, f, 0, 0]
                        acc += dy[n, f, 2 * h, 2 * ww + 1] * w[c, f, 0, 1]
                        acc += dy[n, f, 2 * h + 1, 2 * ww] * w[c, f, 1, 0]
                        acc += dy[n, f, 2 * h + 1, 2 * ww + 1] * w[c, f, 1, 1]
                        dx[n, c, h, ww] += acc
    return dx


@njit(cache=True, fastmath=True)
def convt2_bwd_weight(x, dy):
    N, C, H, W = x.shape
    F = dy.shape[1]
    dw = np.zeros((C, F, 2, 2), dtype=x.dtype)
    for n in range(N):
        for c in range(C):
            for f in range(F):
                a00 = 0.0
                a01 = 0.0
                a10 = 0.0
                a11 = 0.0
                for h in range(H):
                    for ww in range(W):
                        v = x[n, c, h, ww]
                        a00 += v * dy[n, f, 2 * h, 2 * ww]
                        a01 += v * dy[n, f, 2 * h, 2 * ww + 1]
                        a10 += v * dy[n, f, 2 * h + 1, 2 * ww]
                        a11 += v * dy[n, f, 2 * h + 1, 2 * ww + 1]
                dw[c, f, 0, 0] += a00
                dw[c, f, 0, 1] += a01
                dw[c, f, 1, 0] += a10
                dw[c, f, 1, 1] += a11
    return dw


@njit(cache=True)
def maxpool2_fwd(x):
    N, C, H, W = x.shape
    OH, OW = H // 2, W // 2
    y = np.empty((N, C, OH, OW), dtype=x.dtype)
    idx = np.empty((N, C, OH, OW), dtype=np.uint8)
    for n in range(N):
        for c in range(C):
            for oh in range(OH):
                for ow in range(OW):
                    best = x[n, c, 2 * oh, 2 * ow]
                    bi = 0
                    for i in range(2):
                        for j in range(2):
                            if i == 0 and j == 0:
                                continue
                            v = x[n, c, 2 * oh + i, 2 * ow + j]
                            if v > best:
                                best = v
                                bi = 2 * i + j
                    y[n, c, oh, ow] = best
                    idx[n, c, oh, ow] = bi
    return y, idx


@njit(cache=True)
def maxpool2_bwd(dy, idx, H, W):
    N, C, OH, OW = dy.shape
    dx = np.zeros((N, C, H, W), dtype=dy.dtype)
    for n in range(N):
        for c in range(C):
            for oh in range(OH):
                for ow in range(OW):
                    b = idx[n, c, oh, ow]
                    dx[n, c, 2 * oh + b // 2, 2 * ow + b % 2] = dy[n, c, oh, ow]
    return dx
