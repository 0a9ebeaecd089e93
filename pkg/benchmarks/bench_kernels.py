"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N] [--size WxH]

The first numba call of each kernel includes JIT compilation (or a cache
load) and is reported separately from the steady-state timing.
"""
import argparse
import time

import numpy as np

from stereotwin import _accel, synthetic
from stereotwin.correspondence import DisparityParams, zncc_cost_volume
from stereotwin.rectification import RasterImage, warp_image


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernels(width, height):
    rng = np.random.default_rng(0)
    left = rng.random((height, width))
    right = np.roll(left, -12, axis=1)
    mask = np.ones_like(left, dtype=bool)
    params = DisparityParams(window_radius=4, d_min=0, d_max=32)
    img = RasterImage(left)
    h = np.array([[1.01, 0.02, -3.0], [-0.01, 0.99, 2.0], [1e-5, -2e-5, 1.0]])
    spec = synthetic.front_rack_scene(width, height)
    faces = [f for obj in spec.objects for f in obj.faces()]
    tables = synthetic._texture_tables(len(faces), spec.texture_seed)
    intr = spec.rig.left_intrinsics
    return {
        "zncc volume": lambda: zncc_cost_volume(left, right, mask, mask, params),
        "warp": lambda: warp_image(img, h),
        "render": lambda: synthetic.render_view(faces, intr, spec.left_pose, width, height, tables, spec.texture_cell),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", default="640x480")
    args = ap.parse_args()
    width, height = (int(v) for v in args.size.lower().split("x"))
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    print(f"{'kernel':<12} {'backend':<8} {'first (s)':>10} {'best (s)':>10}")
    results = {}
    for name, fn in kernels(width, height).items():
        for b in backends:
            with _accel.use_backend(b):
                t0 = time.perf_counter()
                fn()
                first = time.perf_counter() - t0
                best = _best(fn, args.repeat)
            results[name, b] = best
            print(f"{name:<12} {b:<8} {first:>10.4f} {best:>10.4f}")
    if "numba" in backends:
        print()
        for name in ("zncc volume", "warp", "render"):
            print(f"{name:<12} speedup x{results[name, 'numpy'] / results[name, 'numba']:.1f}")


if __name__ == "__main__":
    main()
