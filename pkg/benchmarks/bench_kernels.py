"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on inputs shaped like one training batch of the default
configuration (k=5, 500-row images, about 170 populated rows). The first
jitted call is excluded so compilation does not count.
"""

import argparse
import time

import numpy as np

from codeimage import cnn, kernels
from codeimage.cnn import _layout, _stacked_filters


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def conv_inputs(rng, populated=170, rows=500):
    model = cnn.init_model(0, rows)
    heights, offsets = _layout(model)
    X = np.zeros((populated, 3 * model.dim))
    X[:] = rng.standard_normal(X.shape)
    Y = X @ _stacked_filters(model)
    bias = rng.standard_normal(model.feature_length) * 0.01
    return model, heights, offsets, X, Y, bias


def bench_pool(rng, repeat):
    model, heights, offsets, X, Y, bias = conv_inputs(rng)
    n = X.shape[0]

    def run(fn):
        pooled = np.empty(model.feature_length)
        winner = np.empty(model.feature_length, dtype=np.int64)
        return lambda: fn(Y, n, model.rows, heights, offsets, model.n_maps, bias, pooled, winner)

    return run(kernels.pool_banks_jit), run(kernels.pool_banks_numpy)


def bench_scatter(rng, repeat):
    model, heights, offsets, X, Y, bias = conv_inputs(rng)
    n = X.shape[0]
    winner = rng.integers(0, n - 10, model.feature_length)
    dconv = rng.standard_normal(model.feature_length)
    G = np.zeros((3 * model.dim, int(heights.sum()) * model.n_maps))

    def run(fn):
        return lambda: fn(X, n, heights, offsets, model.n_maps, winner, dconv, G)

    return run(kernels.scatter_filter_grads_jit), run(kernels.scatter_filter_grads_numpy)


def bench_bfs(rng, repeat):
    adj = (rng.random((60, 60)) < 0.05).astype(np.uint8)
    np.fill_diagonal(adj, 0)
    adj = np.maximum(adj, adj.T)
    return (lambda: kernels.bfs_all_pairs_jit(adj)), (lambda: kernels.bfs_all_pairs_numpy(adj))


def bench_embedding(rng, repeat):
    vocab, dim, sentences = 400, 128, 300
    lengths = rng.integers(2, 12, sentences)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    tokens = rng.integers(0, vocab, offsets[-1]).astype(np.int64)
    order = np.arange(sentences, dtype=np.int64)
    # negatives and learning rates are drawn per target token
    negatives = rng.integers(0, vocab, (offsets[-1], 5)).astype(np.int64)
    lrs = np.full(offsets[-1], 0.05)
    W_in = rng.standard_normal((vocab, dim)) * 0.01
    W_out = np.zeros((vocab, dim))

    def run(fn):
        return lambda: fn(tokens, offsets, order, negatives, lrs, W_in.copy(), W_out.copy(), True)

    return run(kernels.neg_sampling_pass_jit), run(kernels.neg_sampling_pass_numpy)


BENCHES = {
    "pool_banks": bench_pool,
    "scatter_filter_grads": bench_scatter,
    "bfs_all_pairs": bench_bfs,
    "neg_sampling_pass": bench_embedding,
}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<24}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, make in BENCHES.items():
        jit_fn, np_fn = make(rng, args.repeat)
        jit_fn()  # compile
        t_jit = best_of(jit_fn, args.repeat)
        t_np = best_of(np_fn, args.repeat)
        print(f"{name:<24}{t_jit * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_jit:>9.1f}x")


if __name__ == "__main__":
    main()
