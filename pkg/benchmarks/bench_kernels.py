"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Also times one full recovery so the kernel share of the pipeline is visible.
"""
import argparse
import timeit

import numpy as np

from qcs import bdq, kernels, quantizer, sensing


def cases(rng):
    levels = rng.integers(0, 4, 64).astype(np.uint16)
    packed = kernels.backends()["python"].pack_bits(levels, 2)
    y = rng.uniform(-1, 1, 64)
    phi = sensing.generate_matrix(64, 128, seed=1)
    x = rng.standard_normal(128)
    r = rng.standard_normal(64)
    return {
        "quantize_levels (M=64, B=2)": lambda k: k.quantize_levels(y, 0.7, 2),
        "pack_bits (M=64, B=2)": lambda k: k.pack_bits(levels, 2),
        "unpack_bits (M=64, B=2)": lambda k: k.unpack_bits(packed, 64, 2),
        "sparse_matvec (64x128)": lambda k: k.sparse_matvec(phi.supports, x, 64),
        "sparse_rmatvec (64x128)": lambda k: k.sparse_rmatvec(phi.supports, r),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    impls = kernels.backends()
    names = sorted(impls)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':32s}" + "".join(f"{n:>14s}" for n in names) + "   speedup")
    for label, fn in cases(rng).items():
        times = {n: min(timeit.repeat(lambda: fn(impls[n]), number=args.repeat, repeat=5))
                 / args.repeat * 1e6 for n in names}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:32s}" + "".join(f"{times[n]:12.2f}us" for n in names) + f"   {speed:6.1f}x")

    phi = sensing.generate_matrix(64, 128, seed=1)
    xs = rng.standard_normal(128)
    y = phi.matvec(xs / np.linalg.norm(xs))
    cfg = quantizer.QuantizerConfig(0.7 * np.abs(y).max(), 2)
    z = quantizer.dequantize(quantizer.quantize(y, cfg))
    opts = bdq.BdqOptions(delta=cfg.cell_width, v_ref=cfg.v_ref)
    t = min(timeit.repeat(lambda: bdq.recover(z, phi, opts), number=1, repeat=3))
    print(f"one recover() call (N=128, M=64): {t * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
