"""Hot inner loops, each with a numba path and a pure-numpy fallback.

Set ``CODEIMAGE_NO_NUMBA=1`` before import to force the numpy path. Both
paths accumulate in the same order, so results agree to rounding (and are
usually bitwise identical). ``benchmarks/bench_kernels.py`` times them.
"""

from __future__ import annotations

import os
from collections import deque

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("CODEIMAGE_NO_NUMBA", "").lower() not in (
    "1", "true", "yes",
)


# -- convolution banks: shift-add, ReLU, global max pool ---------------------
#
# ``Y`` holds per-row filter responses for the populated rows of one image:
# column ``bank_offsets[b] + o * n_maps + f`` is the response of row r to
# offset o of filter f in bank b. Rows at or past ``n`` are zero, so every
# window lying entirely in the padding evaluates to the bias alone.


def _pool_banks_loops(Y, n, rows, heights, bank_offsets, n_maps, bias, pooled, winner):
    for b in range(heights.shape[0]):
        m = heights[b]
        positions = rows - m + 1
        computed = min(n, positions)
        base = bank_offsets[b]
        for f in range(n_maps):
            k = b * n_maps + f
            best = -1.0
            arg = -1
            for p in range(computed):
                s = bias[k]
                for o in range(m):
                    if p + o < n:
                        s += Y[p + o, base + o * n_maps + f]
                v = s if s > 0.0 else 0.0
                if v > best:
                    best = v
                    arg = p
            if positions > n:
                v = bias[k] if bias[k] > 0.0 else 0.0
                if v > best:
                    best = v
                    arg = n
            pooled[k] = best
            winner[k] = arg


def pool_banks_numpy(Y, n, rows, heights, bank_offsets, n_maps, bias, pooled, winner):
    for b, m in enumerate(heights):
        positions = rows - m + 1
        computed = min(n, positions)
        base = bank_offsets[b]
        sl = slice(b * n_maps, (b + 1) * n_maps)
        acc = np.broadcast_to(bias[sl], (computed, n_maps)).copy()
        for o in range(m):
            stop = min(computed, n - o)
            if stop > 0:
                acc[:stop] += Y[o:o + stop, base + o * n_maps: base + (o + 1) * n_maps]
        relu = np.maximum(acc, 0.0)
        if positions > n:
            relu = np.vstack([relu, np.maximum(bias[sl], 0.0)[None, :]])
        winner[sl] = np.argmax(relu, axis=0)
        pooled[sl] = relu[winner[sl], np.arange(n_maps)]


# -- sparse filter gradient: only the max-pool winner receives gradient ------


def _scatter_filter_grads_loops(X, n, heights, bank_offsets, n_maps, winner, dconv, G):
    width = X.shape[1]
    for b in range(heights.shape[0]):
        m = heights[b]
        base = bank_offsets[b]
        for f in range(n_maps):
            k = b * n_maps + f
            g = dconv[k]
            if g == 0.0:
                continue
            p = winner[k]
            for o in range(m):
                r = p + o
                if r < n:
                    col = base + o * n_maps + f
                    for c in range(width):
                        G[c, col] += g * X[r, c]


def scatter_filter_grads_numpy(X, n, heights, bank_offsets, n_maps, winner, dconv, G):
    for b, m in enumerate(heights):
        base = bank_offsets[b]
        for f in range(n_maps):
            k = b * n_maps + f
            g = dconv[k]
            if g == 0.0:
                continue
            p = winner[k]
            for o in range(m):
                r = p + o
                if r < n:
                    G[:, base + o * n_maps + f] += g * X[r]


# -- all-pairs BFS on an unweighted graph ------------------------------------


def _bfs_all_pairs_loops(adj):
    N = adj.shape[0]
    dist = np.full((N, N), -1, dtype=np.int64)
    queue = np.empty(N, dtype=np.int64)
    for s in range(N):
        dist[s, s] = 0
        head = 0
        tail = 1
        queue[0] = s
        while head < tail:
            u = queue[head]
            head += 1
            for v in range(N):
                if adj[u, v] != 0 and dist[s, v] < 0:
                    dist[s, v] = dist[s, u] + 1
                    queue[tail] = v
                    tail += 1
    return dist


def bfs_all_pairs_numpy(adj):
    N = adj.shape[0]
    neighbors = [np.flatnonzero(adj[u]) for u in range(N)]
    dist = np.full((N, N), -1, dtype=np.int64)
    for s in range(N):
        dist[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in neighbors[u]:
                if dist[s, v] < 0:
                    dist[s, v] = dist[s, u] + 1
                    queue.append(v)
    return dist


# -- negative-sampling SGD over sentences ------------------------------------
#
# Each target position t of a sentence is predicted from the mean of the
# sentence's other input vectors. Negatives and learning rates are drawn by
# the caller, which keeps both paths deterministic and identical.


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def _log_sigmoid(x):
    if x >= 0:
        return -np.log1p(np.exp(-x))
    return x - np.log1p(np.exp(x))


def _neg_sampling_pass_loops(tokens, offsets, order, negatives, lrs, W_in, W_out, update):
    dim = W_in.shape[1]
    h = np.empty(dim)
    grad_h = np.empty(dim)
    loss = 0.0
    slot = 0
    for idx in range(order.shape[0]):
        s = order[idx]
        lo = offsets[s]
        hi = offsets[s + 1]
        length = hi - lo
        if length < 2:
            continue
        for t in range(lo, hi):
            lr = lrs[slot]
            h[:] = 0.0
            for c in range(lo, hi):
                if c != t:
                    h += W_in[tokens[c]]
            h /= length - 1
            grad_h[:] = 0.0
            target = tokens[t]
            for j in range(negatives.shape[1] + 1):
                if j == 0:
                    w = target
                    label = 1.0
                else:
                    w = negatives[slot, j - 1]
                    if w == target:
                        continue
                    label = 0.0
                score = 0.0
                for d in range(dim):
                    score += W_out[w, d] * h[d]
                if label > 0.0:
                    loss -= _log_sigmoid(score)
                else:
                    loss -= _log_sigmoid(-score)
                if update:
                    g = lr * (label - _sigmoid(score))
                    for d in range(dim):
                        grad_h[d] += g * W_out[w, d]
                        W_out[w, d] += g * h[d]
            if update:
                grad_h /= length - 1
                for c in range(lo, hi):
                    if c != t:
                        W_in[tokens[c]] += grad_h
            slot += 1
    return loss


def _np_sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x)) if x >= 0 else np.exp(x) / (1.0 + np.exp(x))


def _np_log_sigmoid(x):
    return -np.log1p(np.exp(-x)) if x >= 0 else x - np.log1p(np.exp(x))


def neg_sampling_pass_numpy(tokens, offsets, order, negatives, lrs, W_in, W_out, update):
    loss = 0.0
    slot = 0
    for s in order:
        lo, hi = offsets[s], offsets[s + 1]
        length = hi - lo
        if length < 2:
            continue
        ids = tokens[lo:hi]
        for t in range(length):
            context = np.delete(ids, t)
            h = W_in[context].sum(axis=0) / (length - 1)
            grad_h = np.zeros_like(h)
            target = ids[t]
            candidates = [(target, 1.0)] + [
                (w, 0.0) for w in negatives[slot] if w != target
            ]
            for w, label in candidates:
                score = float(W_out[w] @ h)
                loss -= _np_log_sigmoid(score) if label > 0 else _np_log_sigmoid(-score)
                if update:
                    g = lrs[slot] * (label - _np_sigmoid(score))
                    grad_h += g * W_out[w]
                    W_out[w] += g * h
            if update:
                grad_h /= length - 1
                for c in context:
                    W_in[c] += grad_h
            slot += 1
    return loss


if numba is not None:
    _jit = numba.njit(cache=True, nogil=True)
    pool_banks_jit = _jit(_pool_banks_loops)
    scatter_filter_grads_jit = _jit(_scatter_filter_grads_loops)
    bfs_all_pairs_jit = _jit(_bfs_all_pairs_loops)
    _sigmoid = _jit(_sigmoid)
    _log_sigmoid = _jit(_log_sigmoid)
    neg_sampling_pass_jit = _jit(_neg_sampling_pass_loops)
else:  # pragma: no cover
    pool_banks_jit = scatter_filter_grads_jit = None
    bfs_all_pairs_jit = neg_sampling_pass_jit = None

if USE_NUMBA:
    pool_banks = pool_banks_jit
    scatter_filter_grads = scatter_filter_grads_jit
    bfs_all_pairs = bfs_all_pairs_jit
    neg_sampling_pass = neg_sampling_pass_jit
else:
    pool_banks = pool_banks_numpy
    scatter_filter_grads = scatter_filter_grads_numpy
    bfs_all_pairs = bfs_all_pairs_numpy
    neg_sampling_pass = neg_sampling_pass_numpy
