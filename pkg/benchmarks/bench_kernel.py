"""Time the compiled and pure-Python stepping kernels on the same inputs.

    python3 benchmarks/bench_kernel.py [--steps N] [--repeat R]

Both kernels must agree bit for bit; the script checks that before timing.
"""

import argparse
import timeit

import numpy as np

from safepredict import _kernel_py
from safepredict._backend import compiled_kernel
from safepredict.meta import MetaConfig, SafePredict, Variant


def _inputs(n, variant):
    rng = np.random.default_rng(0)
    losses = (rng.random(n) < 0.1).astype(float)
    cfg = MetaConfig(0.05, variant=variant, horizon=n, alpha=10.0 / n if variant is Variant.WS_DOUBLING else 0.0)
    sp = SafePredict(cfg, seed=1)
    uniforms = np.random.default_rng(2).random(n)
    args = (losses, uniforms, cfg.alphas(0, n), cfg.betas(0, n), cfg.epsilon, cfg.w_init,
            cfg.log_inv_wd, cfg.variant.doubling, sp.state._pack())
    return args


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--repeat", type=int, default=5)
    opts = p.parse_args()

    compiled = compiled_kernel()
    kernels = {"python": _kernel_py}
    if compiled is None:
        print("compiled kernel not built; timing the fallback only")
    else:
        kernels["cython"] = compiled

    print(f"{'variant':<12}{'kernel':<8}{'best s':>10}{'ns/step':>10}{'speedup':>9}")
    for variant in (Variant.DOUBLING, Variant.WS_DOUBLING):
        args = _inputs(opts.steps, variant)
        outs = {name: k.simulate(*args) for name, k in kernels.items()}
        if len(outs) == 2:
            a, b = outs["python"], outs["cython"]
            assert np.array_equal(np.asarray(a[0], float), np.asarray(b[0], float))
            for x, y in zip(a[1:], b[1:]):
                assert np.array_equal(x, y), "kernels disagree"
        times = {}
        for name, k in kernels.items():
            times[name] = min(timeit.repeat(lambda: k.simulate(*args), number=1, repeat=opts.repeat))
        for name, t in times.items():
            speed = times["python"] / t
            print(f"{variant.value:<12}{name:<8}{t:>10.4f}{1e9 * t / opts.steps:>10.1f}{speed:>8.1f}x")


if __name__ == "__main__":
    main()
