#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Covers the hot paths: 3x3 convolution forward/backward, 2x2 max pooling,
polyphase resampling, and the end-to-end per-segment feature+cascade cost
that the 250 ms streaming budget cares about.
"""

import argparse
import time

import numpy as np

from breathsense import kernels as K
from breathsense.audio_io import AudioClip, resample
from breathsense.features import mel_spectrogram, mfcc
from breathsense.labels import Segment


def timeit(fn, *args, repeats=5):
    fn(*args)  # warmup / jit compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats * 1000.0


def bench_pairs(repeats):
    rng = np.random.default_rng(0)
    rows = []

    shapes = [
        ("conv fwd 32x1x128x126 -> 8", (32, 1, 128, 126), 8),
        ("conv fwd 32x8x64x63 -> 16", (32, 8, 64, 63), 16),
        ("conv fwd 32x16x32x31 -> 32", (32, 16, 32, 31), 32),
        ("conv fwd 1x1x128x126 -> 8", (1, 1, 128, 126), 8),
    ]
    for name, shape, co in shapes:
        x = rng.standard_normal(shape).astype(np.float32)
        w = rng.standard_normal((co, shape[1], 3, 3)).astype(np.float32)
        t_np = timeit(K._np_conv2d_forward, x, w, repeats=repeats)
        t_nb = timeit(K._nb_conv2d_forward, x, w, repeats=repeats) if K.HAVE_NUMBA else float("nan")
        rows.append((name, t_np, t_nb))

    x = rng.standard_normal((32, 8, 64, 63)).astype(np.float32)
    dy = rng.standard_normal((32, 16, 64, 63)).astype(np.float32)
    t_np = timeit(K._np_conv2d_backward_weights, x, dy, repeats=repeats)
    t_nb = timeit(K._nb_conv2d_backward_weights, x, dy, repeats=repeats) if K.HAVE_NUMBA else float("nan")
    rows.append(("conv dW 32x8x64x63 -> 16", t_np, t_nb))

    x = rng.standard_normal((32, 16, 64, 63)).astype(np.float32)
    t_np = timeit(K._np_maxpool2d_forward, x, repeats=repeats)
    t_nb = timeit(K._nb_maxpool2d_forward, x, repeats=repeats) if K.HAVE_NUMBA else float("nan")
    rows.append(("maxpool 32x16x64x63", t_np, t_nb))

    sig = rng.standard_normal(48000 * 5)
    filters = np.ascontiguousarray(rng.standard_normal((1, 64)))
    t_np = timeit(K._np_polyphase_resample, sig, filters, 1, 3, 31, repeats=repeats)
    t_nb = (
        timeit(K._nb_polyphase_resample, sig, filters, 1, 3, 31, repeats=repeats)
        if K.HAVE_NUMBA
        else float("nan")
    )
    rows.append(("resample 5 s 48k -> 16k", t_np, t_nb))
    return rows


def bench_pipeline(repeats):
    """Per-segment cost of the streaming path with the selected kernel set."""
    rng = np.random.default_rng(1)
    seg = Segment(clip_id="bench", start_s=0.0, samples=rng.uniform(-0.3, 0.3, 8000).astype(np.float32))
    rows = [
        ("mel spectrogram (one segment)", timeit(lambda: mel_spectrogram(seg), repeats=repeats)),
        ("mfcc (one segment)", timeit(lambda: mfcc(seg), repeats=repeats)),
    ]
    clip = AudioClip(samples=rng.uniform(-0.3, 0.3, 48000).astype(np.float32), sample_rate=48000)
    rows.append(("resample 1 s clip 48k->16k", timeit(lambda: resample(clip, 16000), repeats=repeats)))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    which = "numba + numpy fallback" if K.HAVE_NUMBA else "numpy only (numba unavailable/disabled)"
    print(f"kernel paths: {which}\n")
    print(f"{'workload':<36}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, t_np, t_nb in bench_pairs(args.repeats):
        speed = f"{t_np / t_nb:.2f}x" if t_nb == t_nb else "-"
        nb = f"{t_nb:.2f}" if t_nb == t_nb else "-"
        print(f"{name:<36}{t_np:>12.2f}{nb:>12}{speed:>10}")

    print(f"\nselected-path pipeline costs ({'numba' if K.HAVE_NUMBA else 'numpy'}):")
    for name, t in bench_pipeline(args.repeats):
        print(f"  {name:<34}{t:>10.2f} ms")


if __name__ == "__main__":
    main()
