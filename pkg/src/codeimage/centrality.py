"""Degree, Katz and closeness centrality per code line.

Degree and closeness use the symmetrized adjacency; Katz uses the directed
one with ``A[i, j] = 1`` meaning line j points into line i, i.e. the
transpose of ``CodeGraph.adjacency``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import kernels
from .cpg import CodeGraph
from .errors import AlphaTooLarge, NonConvergence, SingularSystem

log = logging.getLogger(__name__)

POWER_TOL = 1e-9
POWER_MAX_ITER = 10_000
DEFAULT_ALPHA = 0.1
DEFAULT_BETA = 1.0


@dataclass(frozen=True)
class CentralityTriple:
    degree: float
    katz: float
    closeness: float

    def as_array(self) -> np.ndarray:
        return np.array([self.degree, self.katz, self.closeness])


def _matrix(graph: CodeGraph | np.ndarray) -> np.ndarray:
    return graph.adjacency if isinstance(graph, CodeGraph) else np.asarray(graph)


def degree_centrality(graph: CodeGraph | np.ndarray) -> np.ndarray:
    adj = _matrix(graph)
    N = adj.shape[0]
    if N <= 1:
        return np.zeros(N)
    sym = (adj != 0) | (adj.T != 0)
    np.fill_diagonal(sym, False)
    return sym.sum(axis=1) / (N - 1)


def _perron_root(block: np.ndarray) -> float:
    """Spectral radius of an irreducible non-negative block.

    Power iteration on ``block + I`` (aperiodic, so the iteration converges
    even for periodic blocks), stopped when the Collatz-Wielandt bounds
    ``min (Mx)_i / x_i <= rho <= max (Mx)_i / x_i`` meet within tolerance.
    """
    n = block.shape[0]
    if n == 1:
        return float(block[0, 0])
    M = block + np.eye(n)
    x = np.ones(n)
    gap = np.inf
    for _ in range(POWER_MAX_ITER):
        y = M @ x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        gap = hi - lo
        if gap <= POWER_TOL * max(1.0, hi):
            return float(0.5 * (lo + hi)) - 1.0
        x = y / np.linalg.norm(y)
    exc = NonConvergence("power iteration did not converge", gap)
    exc.bound = float(hi) - 1.0  # Collatz-Wielandt upper bound on the root
    raise exc


def katz_alpha_bound(graph: CodeGraph | np.ndarray) -> float:
    """Largest eigenvalue (spectral radius) of the adjacency matrix.

    The matrix is split into strongly connected components; each block is
    irreducible, so its Perron root is simple and power iteration converges.
    """
    adj = (_matrix(graph) != 0).astype(np.float64)
    if not adj.any():
        return 0.0
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    lam = 0.0
    failure = None
    for c in range(n_comp):
        idx = np.flatnonzero(labels == c)
        block = adj[np.ix_(idx, idx)]
        if not block.any():
            continue
        try:
            lam = max(lam, _perron_root(block))
        except NonConvergence as exc:
            failure = exc if failure is None or exc.bound > failure.bound else failure
    if failure is not None:
        failure.bound = max(failure.bound, lam)
        raise failure
    return lam


def default_alpha(lambda_max: float) -> float:
    return DEFAULT_ALPHA if lambda_max <= 0 else min(DEFAULT_ALPHA, 0.9 / lambda_max)


def katz_centrality(
    graph: CodeGraph | np.ndarray,
    alpha: float | None = None,
    beta: float = DEFAULT_BETA,
    lambda_max: float | None = None,
) -> np.ndarray:
    """Solve ``(I - alpha * A^T) x = beta * 1`` where A is the line adjacency."""
    adj = (_matrix(graph) != 0).astype(np.float64)
    N = adj.shape[0]
    if lambda_max is None:
        lambda_max = katz_alpha_bound(adj)
    if alpha is None:
        alpha = default_alpha(lambda_max)
    if lambda_max > 0 and alpha >= 1.0 / lambda_max:
        raise AlphaTooLarge(f"alpha={alpha} must be below 1/lambda_max={1.0 / lambda_max:.6g}")
    system = np.eye(N) - alpha * adj.T
    try:
        return np.linalg.solve(system, np.full(N, float(beta)))
    except np.linalg.LinAlgError as exc:  # unreachable for admissible alpha
        raise SingularSystem(str(exc)) from exc


def closeness_centrality(graph: CodeGraph | np.ndarray) -> np.ndarray:
    """(N-1)/sum d on connected graphs; component-scaled otherwise."""
    adj = _matrix(graph)
    N = adj.shape[0]
    if N <= 1:
        return np.zeros(N)
    sym = ((adj != 0) | (adj.T != 0)).astype(np.uint8)
    np.fill_diagonal(sym, 0)
    dist = kernels.bfs_all_pairs(np.ascontiguousarray(sym))
    out = np.zeros(N)
    for v in range(N):
        reach = dist[v] > 0
        total = dist[v][reach].sum()
        r = int(reach.sum()) + 1
        if total > 0:
            out[v] = ((r - 1) / (N - 1)) * ((r - 1) / total)
    return out


def centralities(graph: CodeGraph, alpha: float | None = None, beta: float = DEFAULT_BETA) -> np.ndarray:
    """(L, 3) array of (degree, katz, closeness) per line.

    A single-line graph gets all zeros. If the spectral radius does not
    converge, its Collatz-Wielandt upper bound is used instead; any upper
    bound keeps the default alpha admissible.
    """
    N = _matrix(graph).shape[0]
    if N <= 1:
        return np.zeros((N, 3))
    try:
        lam = katz_alpha_bound(graph)
    except NonConvergence as exc:
        log.warning("using the upper bound %.6g for lambda_max: %s", exc.bound, exc)
        lam = exc.bound
    return np.stack(
        [degree_centrality(graph), katz_centrality(graph, alpha, beta, lam), closeness_centrality(graph)],
        axis=1,
    )


def write_centrality_csv(path, values: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("line,degree,katz,closeness\n")
        for i, (d, k, c) in enumerate(values, start=1):
            fh.write(f"{i},{d:.9f},{k:.9f},{c:.9f}\n")
