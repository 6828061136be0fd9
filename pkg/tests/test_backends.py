"""The numba kernels and the pure-numpy kernels must agree exactly in
float64 and to float32 round-off in float32, across all code paths
(including the channel-innermost small-output variants)."""

import numpy as np
import pytest

from gradseg import kernels_numba as knb
from gradseg import kernels_numpy as knp
from gradseg.rng import RngStream


def _close(a, b, dtype):
    tol = 1e-12 if dtype == np.float64 else 1e-4
    np.testing.assert_allclose(a, b, rtol=tol, atol=tol)


SHAPES = [
    # (N, C, H, W, F, K, pad) — last two rows hit the small-output kernels
    (2, 3, 8, 8, 4, 3, 1),
    (1, 1, 16, 16, 2, 3, 0),
    (2, 16, 4, 4, 8, 3, 1),
    (3, 32, 2, 2, 16, 3, 1),
]


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("shape", SHAPES)
def test_conv2d_paths_agree(dtype, shape):
    N, C, H, W, F, K, pad = shape
    rng = RngStream(5, f"conv-{shape}-{dtype.__name__}")
    x = rng.normal((N, C, H, W), dtype=dtype)
    w = rng.normal((F, C, K, K), dtype=dtype)
    b = rng.normal((F,), dtype=dtype)
    y_np = knp.conv2d_fwd(x, w, b, pad)
    y_nb = knb.conv2d_fwd(x, w, b, pad)
    _close(y_np, y_nb, dtype)
    dy = rng.normal(y_np.shape, dtype=dtype)
    _close(
        knp.conv2d_bwd_input(dy, w, pad, H, W),
        knb.conv2d_bwd_input(dy, w, pad, H, W),
        dtype,
    )
    _close(
        knp.conv2d_bwd_weight(x, dy, pad, K, K),
        knb.conv2d_bwd_weight(x, dy, pad, K, K),
        dtype,
    )


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_conv_transpose_agree(dtype):
    rng = RngStream(6, f"convt-{dtype.__name__}")
    x = rng.normal((2, 5, 4, 4), dtype=dtype)
    w = rng.normal((5, 3, 2, 2), dtype=dtype)
    b = rng.normal((3,), dtype=dtype)
    y_np = knp.convt2_fwd(x, w, b)
    y_nb = knb.convt2_fwd(x, w, b)
    _close(y_np, y_nb, dtype)
    dy = rng.normal(y_np.shape, dtype=dtype)
    _close(knp.convt2_bwd_input(dy, w), knb.convt2_bwd_input(dy, w), dtype)
    _close(knp.convt2_bwd_weight(x, dy), knb.convt2_bwd_weight(x, dy), dtype)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_maxpool_agree_including_ties(dtype):
    rng = RngStream(7, f"pool-{dtype.__name__}")
    x = rng.normal((2, 3, 8, 8), dtype=dtype)
    # force ties so both implementations must break toward the first element
    x[0, 0, :2, :2] = 1.0
    x[1, 2, 4:6, 4:6] = -0.5
    y_np, idx_np = knp.maxpool2_fwd(x)
    y_nb, idx_nb = knb.maxpool2_fwd(x)
    assert np.array_equal(y_np, y_nb)
    assert np.array_equal(idx_np, idx_nb)
    dy = rng.normal(y_np.shape, dtype=dtype)
    assert np.array_equal(
        knp.maxpool2_bwd(dy, idx_np, 8, 8), knb.maxpool2_bwd(dy, idx_nb, 8, 8)
    )


def test_backend_env_selection(monkeypatch):
    from gradseg import backend

    assert backend.get_kernels("numpy") is knp
    assert backend.get_kernels("numba") is knb
