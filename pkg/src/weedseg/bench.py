"""Wall-time measurement for the forward pass and the compiled kernels."""

from __future__ import annotations

import time

import numpy as np

from . import _backend


def summarize(times) -> dict:
    t = np.asarray(times, dtype=np.float64)
    return {
        "repeats": int(t.size),
        "mean_ms": float(t.mean() * 1e3),
        "median_ms": float(np.median(t) * 1e3),
        "p95_ms": float(np.percentile(t, 95) * 1e3),
    }


def time_call(fn, repeats: int, warmup: int = 1) -> list[float]:
    for _ in range(warmup):
        fn()
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return out


def forward_latency(in_channels: int, size: int, repeats: int, seed: int, warmup: int = 1) -> dict:
    """Forward pass plus softmax on one ``size`` x ``size`` frame."""
    from .net.model import NetworkConfig, init_params, predict_probs

    cfg = NetworkConfig(in_channels=in_channels, seed=seed)
    params = init_params(cfg)
    x = np.random.default_rng(seed).random((1, in_channels, size, size), dtype=np.float32)
    res = summarize(time_call(lambda: predict_probs(params, x, cfg), repeats, warmup))
    res["in_channels"] = in_channels
    res["size"] = size
    return res


def kernel_cases(size: int, seed: int):
    """Return ``build(module)`` giving {kernel name: zero-argument callable}
    on fixed seeded inputs, so every backend times the same data."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((6, 16, size, size)).astype(np.float32)
    mask = rng.random((size * 2, size * 2)) < 0.45
    img = rng.random((size * 2, size * 2))
    yy, xx = np.mgrid[0 : size * 2, 0 : size * 2].astype(np.float64)
    xs, ys = xx + 0.37, yy - 0.21

    def build(k):
        cols = k.im2col(x, 3, 1)
        pooled, idx = k.maxpool2x2(x)
        return {
            "im2col": lambda: k.im2col(x, 3, 1),
            "col2im": lambda: k.col2im(cols, x.shape, 3, 1),
            "maxpool2x2": lambda: k.maxpool2x2(x),
            "unpool2x2": lambda: k.unpool2x2(pooled, idx),
            "label_components": lambda: k.label_components(mask, 4),
            "bilinear_sample": lambda: k.bilinear_sample(img, xs, ys),
        }

    return build


def compare_backends(size: int, repeats: int, seed: int) -> list[dict]:
    """Median time of every kernel on every importable backend."""
    build = kernel_cases(size, seed)
    rows = []
    for mod in _backend.available():
        for name, fn in build(mod).items():
            res = summarize(time_call(fn, repeats))
            rows.append({"backend": mod.NAME, "kernel": name, **res})
    return rows
