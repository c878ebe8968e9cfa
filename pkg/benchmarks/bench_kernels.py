"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel and size: median seconds per call for each backend
and the speedup.  Both backends are checked for equal results first.
"""
import argparse
import timeit

import numpy as np

from harnn import _kernels_py, kernels

try:
    from harnn import _kernels as compiled
except ImportError:
    compiled = None


def ragged(rng, n_groups, n_cols, max_size):
    sizes = rng.integers(1, max_size + 1, size=n_groups)
    ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return rng.integers(0, n_cols, size=ptr[-1]).astype(np.int64), ptr


def cases(rng):
    # (label, scores batch, item groups, vocabulary size): roughly one multi-hot type per item
    for batch, n_items, vocab in ((32, 300, 200), (256, 1000, 500), (1024, 3000, 2000)):
        tokens, ptr = ragged(rng, n_items, vocab, 6)
        scores = rng.normal(size=(batch, vocab))
        yield f"B={batch} groups={n_items} V={vocab}", scores, tokens, ptr


def median_time(fn, repeat):
    return float(np.median(timeit.repeat(fn, number=1, repeat=repeat)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled kernels not built; only the numpy backend is available")
    impls = {"numpy": _kernels_py}
    if compiled is not None:
        impls["cython"] = compiled

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<22}{'case':<30}" + "".join(f"{k:>12}" for k in impls) + f"{'speedup':>10}")
    for label, scores, tokens, ptr in cases(rng):
        ref = kernels.segment_max(scores, tokens, ptr, impl=_kernels_py)
        dout = rng.normal(size=ref[0].shape)
        idx = rng.integers(0, scores.shape[1], size=scores.shape[0] * 20)
        vals = rng.normal(size=(len(idx), 32))
        for name, impl in impls.items():
            got = kernels.segment_max(scores, tokens, ptr, impl=impl)
            assert np.array_equal(got[0], ref[0]) and np.array_equal(got[1], ref[1]), name

        jobs = {
            "segment_max": lambda impl: kernels.segment_max(scores, tokens, ptr, impl=impl),
            "segment_max_backward": lambda impl: kernels.segment_max_backward(dout, ref[1], scores.shape[1],
                                                                              impl=impl),
            "scatter_add_rows": lambda impl: kernels.scatter_add_rows(np.zeros((scores.shape[1], 32)), idx, vals,
                                                                      impl=impl),
        }
        for kname, job in jobs.items():
            times = {name: median_time(lambda: job(impl), args.repeat) for name, impl in impls.items()}
            speed = f"{times['numpy'] / times['cython']:>9.1f}x" if "cython" in times else ""
            print(f"{kname:<22}{label:<30}" + "".join(f"{t:>12.2e}" for t in times.values()) + speed)


if __name__ == "__main__":
    main()
