import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hswae import _accel


def _im2col_loops(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    cols = np.zeros((n * oh * ow, c * kh * kw), dtype=x.dtype)
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                patch = xp[b, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                cols[(b * oh + i) * ow + j] = patch.reshape(-1)
    return cols


GEOMS = [
    ((2, 3, 5, 5), 3, 3, 1, 0),
    ((2, 3, 5, 5), 3, 3, 1, 1),
    ((1, 2, 8, 8), 4, 4, 2, 1),
    ((3, 1, 7, 6), 2, 3, 2, 0),
    ((1, 4, 16, 16), 4, 4, 2, 1),
]


@pytest.mark.parametrize("shape,kh,kw,stride,pad", GEOMS)
def test_im2col_matches_loops(backend, shape, kh, kw, stride, pad):
    x = np.random.default_rng(0).standard_normal(shape).astype(np.float32)
    np.testing.assert_array_equal(_accel.im2col(x, kh, kw, stride, pad), _im2col_loops(x, kh, kw, stride, pad))


@pytest.mark.parametrize("shape,kh,kw,stride,pad", GEOMS)
def test_backends_agree(shape, kh, kw, stride, pad):
    rng = np.random.default_rng(1)
    x = rng.standard_normal(shape)
    prev = _accel.get_backend()
    try:
        out = {}
        for name in ("numba", "numpy"):
            _accel.set_backend(name)
            cols = _accel.im2col(x, kh, kw, stride, pad)
            g = rng.standard_normal(cols.shape) if name == "numba" else out["numba"][2]
            out[name] = (cols, _accel.col2im(g, shape, kh, kw, stride, pad), g)
    finally:
        _accel.set_backend(prev)
    np.testing.assert_array_equal(out["numba"][0], out["numpy"][0])
    np.testing.assert_allclose(out["numba"][1], out["numpy"][1], rtol=1e-12, atol=1e-12)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 2), c=st.integers(1, 3), h=st.integers(3, 9), w=st.integers(3, 9),
    k=st.integers(1, 3), stride=st.integers(1, 2), pad=st.integers(0, 1), seed=st.integers(0, 2**16),
)
def test_col2im_is_adjoint_of_im2col(n, c, h, w, k, stride, pad, seed):
    # <im2col(x), g> == <x, col2im(g)>
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, c, h, w))
    cols = _accel.im2col(x, k, k, stride, pad)
    g = rng.standard_normal(cols.shape)
    lhs = float(np.sum(cols * g))
    rhs = float(np.sum(x * _accel.col2im(g, x.shape, k, k, stride, pad)))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)
