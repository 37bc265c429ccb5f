"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N wall time of each backend and
the speed-up. The first numba call is excluded (JIT compilation).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from condfield import kernels


def best_of(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng: np.random.Generator):
    r, s = 4096, 192
    sigma = rng.uniform(0, 3, (r, s))
    rgb = rng.random((r, s, 3))
    delta = rng.uniform(0.01, 0.05, (r, s))
    bg = np.zeros(3)
    _, w, tf = kernels.composite_forward_numpy(sigma, rgb, delta, bg)
    g = rng.standard_normal((r, 3))
    edges = np.sort(rng.uniform(2, 6, (r, 129)), axis=-1)
    pdf_w = rng.random((r, 128))
    u = rng.random((r, 64))
    digits = rng.random((2000, 28, 28))
    o = np.tile([0.0, 0.0, 4.0], (r, 1))
    d = rng.normal(size=(r, 3)) * [0.2, 0.2, 0.0] + [0, 0, -1]
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    sph = (rng.uniform(-0.5, 0.5, (8, 3)), rng.uniform(0.1, 0.4, 8), rng.uniform(1, 20, 8),
           rng.random((8, 3)), bg)
    return {
        "composite_forward": lambda b: getattr(kernels, f"composite_forward_{b}")(sigma, rgb, delta, bg),
        "composite_backward": lambda b: getattr(kernels, f"composite_backward_{b}")(
            g, sigma, rgb, delta, bg, w, tf),
        "sample_pdf": lambda b: getattr(kernels, f"sample_pdf_{b}")(edges, pdf_w, u),
        "area_resize": lambda b: getattr(kernels, f"area_resize_{b}")(digits, 16, 16),
        "render_spheres": lambda b: getattr(kernels, f"render_spheres_{b}")(o, d, *sph),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    print(f"{'kernel':20s} {'numpy ms':>10s} {'numba ms':>10s} {'speed-up':>9s}")
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        print(f"{name:20s} {1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
