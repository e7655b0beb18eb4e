#!/usr/bin/env python3
"""Compare the compiled and pure-NumPy kernel backends.

Times each backend on the hot kernels at representative layer shapes and on
a full model forward pass, then prints per-case mean latencies side by side
with the speed ratio. Run from the repository root:

    python3 benchmarks/compare_backends.py [--repeats N] [--frames N]
"""

import argparse
import statistics
from time import perf_counter

import numpy as np

from maskpipe import Tensor, bind, build_mobilenetv2, preprocess, random_archive
from maskpipe import kernels


def timed(fn, repeats):
    fn()  # warm up caches and lazy allocations
    samples = []
    for _ in range(repeats):
        t0 = perf_counter()
        fn()
        samples.append(perf_counter() - t0)
    return statistics.mean(samples) * 1000.0


def kernel_cases(rng):
    """(name, callable-builder) pairs at shapes the network actually runs."""

    def rand(shape):
        return (rng.random(shape, dtype=np.float32) * 2 - 1).astype(np.float32)

    stem_x = Tensor(rand((1, 3, 224, 224)))
    stem_k = Tensor(rand((32, 3, 3, 3)))
    mid_x = Tensor(rand((1, 144, 28, 28)))
    dw_k = Tensor(rand((144, 1, 3, 3)))
    pw_k = Tensor(rand((32, 144, 1, 1)))
    head_x = Tensor(rand((1, 1280, 1, 1)))
    fc_w = rand((128, 1280))
    fc_b = rand((128,))

    return [
        ("conv 3x3/s2 3->32 @224", lambda: kernels.conv2d(stem_x, stem_k, None, 2)),
        ("depthwise 3x3 144ch @28", lambda: kernels.depthwise_conv2d(mid_x, dw_k, None, 1)),
        ("pointwise 1x1 144->32 @28", lambda: kernels.conv2d(mid_x, pw_k, None, 1)),
        ("dense 1280->128", lambda: kernels.dense(head_x, fc_w, fc_b)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repetitions per case (default: 5)")
    parser.add_argument("--frames", type=int, default=3,
                        help="frames for the full forward case (default: 3)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    backends = sorted(kernels.available_backends())
    if len(backends) < 2:
        print(f"only {backends} available; nothing to compare")

    model = bind(build_mobilenetv2(), random_archive(seed=1))
    frames = [preprocess(rng.integers(0, 256, (224, 224, 3), dtype=np.uint8))
              for _ in range(args.frames)]

    def full_forward():
        for frame in frames:
            model.forward(frame)

    cases = kernel_cases(rng) + [(f"full forward x{args.frames}", full_forward)]

    previous = kernels.active_backend()
    results = {}
    try:
        for backend in backends:
            kernels.set_backend(backend)
            results[backend] = [timed(fn, args.repeats) for _, fn in cases]
    finally:
        kernels.set_backend(previous)

    width = max(len(name) for name, _ in cases)
    header = f"{'case':<{width}}" + "".join(f"{b + ' ms':>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'ratio':>10}"
    print(header)
    for i, (name, _) in enumerate(cases):
        row = f"{name:<{width}}"
        for backend in backends:
            row += f"{results[backend][i]:>14.3f}"
        if len(backends) == 2:
            slow, fast = (results[backends[0]][i], results[backends[1]][i])
            row += f"{slow / fast if fast else float('inf'):>10.2f}"
        print(row)
    if len(backends) == 2:
        print(f"\nratio = {backends[0]} time / {backends[1]} time "
              f"(values > 1 mean {backends[1]} is faster)")


if __name__ == "__main__":
    main()
