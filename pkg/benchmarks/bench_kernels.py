"""Time the numba and pure-numpy convolution kernels on desk-scale shapes.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Shapes follow one training batch (64 samples of 4x16x16) through the default
encoder and generator ladders.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from hswae import _accel
from hswae import autodiff as ad
from hswae.model import ArchConfig, encode, generate, init_params, project_to_sphere

# (name, input shape, kernel, stride, pad)
CASES = [
    ("enc conv0 4->32", (64, 4, 16, 16), 4, 2, 1),
    ("enc conv1 32->64", (64, 32, 8, 8), 4, 2, 1),
    ("dec deconv0 64->32", (64, 32, 8, 8), 4, 2, 1),
    ("dec deconv1 32->32", (64, 32, 16, 16), 4, 2, 1),
]


def best_of(fn, repeat: int) -> float:
    fn()  # warm-up (and numba compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times) * 1e3


def bench_kernels(repeat: int) -> None:
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, shape, k, s, p in CASES:
        x = rng.standard_normal(shape).astype(np.float32)
        cols = _accel.im2col(x, k, k, s, p)
        res = {}
        for backend in ("numba", "numpy"):
            _accel.set_backend(backend)
            res[backend] = (
                best_of(lambda: _accel.im2col(x, k, k, s, p), repeat),
                best_of(lambda: _accel.col2im(cols, shape, k, k, s, p), repeat),
            )
        for i, op in enumerate(("im2col", "col2im")):
            nb, npy = res["numba"][i], res["numpy"][i]
            print(f"{op + ' ' + name:<28}{nb:>10.3f}{npy:>10.3f}{npy / nb:>8.2f}x")


def bench_step(repeat: int) -> None:
    arch = ArchConfig()
    params = init_params(arch, 0)
    rng = np.random.default_rng(1)
    images = rng.random((64, 4, 16, 16), dtype=np.float32)
    scalars = rng.standard_normal((64, 15)).astype(np.float32)

    def step():
        params.zero_grads()
        z = encode(params, images, scalars, training=True, update_stats=False)
        img, s = generate(params, project_to_sphere(z), training=True, update_stats=False)
        ad.backward(ad.add(ad.mse_loss(img, ad.Tensor(images)), ad.mse_loss(s, ad.Tensor(scalars))))

    res = {}
    for backend in ("numba", "numpy"):
        _accel.set_backend(backend)
        res[backend] = best_of(step, max(3, repeat // 4))
    print(f"{'autoencoder fwd+bwd, batch 64':<28}{res['numba']:>10.3f}{res['numpy']:>10.3f}{res['numpy'] / res['numba']:>8.2f}x")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20, help="timed repetitions per case (best is reported)")
    args = ap.parse_args()
    prev = _accel.get_backend()
    try:
        bench_kernels(args.repeat)
        bench_step(args.repeat)
    finally:
        _accel.set_backend(prev)


if __name__ == "__main__":
    main()
