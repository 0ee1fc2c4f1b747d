"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--nodes 200] [--repeat 3]

Both backends get identical inputs; the script checks that they agree and
prints the best wall time of each plus the speed-up.
"""
import argparse
import time

import numpy as np

from slicehin.kernels import get_backend
from slicehin.synthetic import planted_two_block


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_walks(g, backends, walks_per_node, walk_length, repeat):
    rng = np.random.default_rng(0)
    starts = np.tile(np.arange(g.num_nodes, dtype=np.int64), walks_per_node)
    uniforms = rng.random((len(starts), walk_length - 1))
    results = {}
    for name, mod in backends.items():
        results[name] = best_of(
            lambda: np.asarray(mod.uniform_walks(g.indptr, g.indices, starts, walk_length, uniforms)),
            repeat)
    outs = [r[1] for r in results.values()]
    assert all(np.array_equal(outs[0], o) for o in outs[1:]), "walk outputs differ"
    return {k: v[0] for k, v in results.items()}, len(starts) * walk_length


def bench_sgns(num_nodes, backends, n_pairs, dim, negatives, repeat):
    rng = np.random.default_rng(1)
    w_in0 = rng.uniform(-0.5 / dim, 0.5 / dim, size=(num_nodes, dim))
    w_out0 = rng.normal(scale=0.01, size=(num_nodes, dim))
    centers = rng.integers(num_nodes, size=n_pairs)
    contexts = rng.integers(num_nodes, size=n_pairs)
    negs = rng.integers(num_nodes, size=(n_pairs, negatives))
    results = {}
    for name, mod in backends.items():
        def run():
            w_in, w_out = w_in0.copy(), w_out0.copy()
            loss = mod.sgns_block(w_in, w_out, centers, contexts, negs, 0.025)
            return loss, w_in, w_out
        results[name] = best_of(run, repeat)
    ref = next(iter(results.values()))[1]
    for _, (loss, w_in, w_out) in results.values():
        assert abs(loss - ref[0]) <= 1e-9 * max(1.0, abs(ref[0])), "losses differ"
        assert np.allclose(w_in, ref[1], atol=1e-12) and np.allclose(w_out, ref[2], atol=1e-12)
    return {k: v[0] for k, v in results.items()}, n_pairs


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=200)
    ap.add_argument("--walks-per-node", type=int, default=10)
    ap.add_argument("--walk-length", type=int, default=80)
    ap.add_argument("--pairs", type=int, default=50_000)
    ap.add_argument("--dim", type=int, default=128)
    ap.add_argument("--negatives", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = {"python": get_backend("python")}
    try:
        backends["cython"] = get_backend("cython")
    except ImportError:
        print("compiled extension not built; timing the Python backend only")

    g, _ = planted_two_block(args.nodes, rng=np.random.default_rng(0))
    rows = []
    t, work = bench_walks(g, backends, args.walks_per_node, args.walk_length, args.repeat)
    rows.append(("uniform_walks", f"{work} steps", t))
    t, work = bench_sgns(g.num_nodes, backends, args.pairs, args.dim, args.negatives, args.repeat)
    rows.append(("sgns_block", f"{work} pairs, d={args.dim}", t))

    print(f"{'kernel':<15}{'workload':<26}{'python s':>10}{'cython s':>10}{'speed-up':>10}")
    for kernel, work, t in rows:
        py, cy = t["python"], t.get("cython")
        cy_s = f"{cy:.4f}" if cy else "-"
        ratio = f"{py / cy:.1f}x" if cy else "-"
        print(f"{kernel:<15}{work:<26}{py:>10.4f}{cy_s:>10}{ratio:>10}")


if __name__ == "__main__":
    main()
