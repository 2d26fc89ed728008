"""Time the compiled kernels against the numpy fallback and check they agree.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from burstcat.background import MixtureGrid, Mog2Params, mog2_update
from burstcat.kernels import compiled_module, fallback


def cases(rng):
    x = rng.random((32, 13, 64, 64), dtype=np.float32)
    cols = fallback.im2col3(x)
    act = rng.random((32, 32, 64, 64), dtype=np.float32)
    pooled, arg = fallback.maxpool2_forward(act)
    dout = rng.random(pooled.shape, dtype=np.float32)
    grid = MixtureGrid.from_frame(rng.random((64, 64)), Mog2Params())
    frame = rng.random((64, 64))

    def mog2(impl):
        model, fg = mog2_update(grid, frame, impl=impl)
        return fg, model.weight, model.mean, model.var

    return {
        "im2col3 32x13x64x64": lambda impl: impl.im2col3(x),
        "col2im3 32x13x64x64": lambda impl: impl.col2im3(cols, x.shape),
        "maxpool2_forward 32x32x64x64": lambda impl: impl.maxpool2_forward(act),
        "maxpool2_backward 32x32x64x64": lambda impl: impl.maxpool2_backward(dout, arg, act.shape),
        "mog2_update 64x64": mog2,
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    compiled = compiled_module()
    if compiled is None:
        print("compiled kernels not built; only the fallback is timed")
    print(f"{'kernel':<32} {'python ms':>10} {'compiled ms':>12} {'speedup':>8} {'identical':>9}")
    for name, fn in cases(np.random.default_rng(0)).items():
        t_py = min(timeit.repeat(lambda: fn(fallback), number=1, repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{name:<32} {t_py:>10.2f} {'-':>12} {'-':>8} {'-':>9}")
            continue
        t_c = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat)) * 1e3
        same = _same(fn(fallback), fn(compiled))
        print(f"{name:<32} {t_py:>10.2f} {t_c:>12.2f} {t_py / t_c:>7.1f}x {str(same):>9}")


if __name__ == "__main__":
    main()
