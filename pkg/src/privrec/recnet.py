"""Recommendation network: the provider's lists as a weighted item graph.

Querying the oracle once per item yields a directed graph with an edge
(i, j) whenever j appears in i's list, weighted 1/log(rank+1) so that
higher-ranked recommendations carry more weight.  The row-normalized
matrix drives every random-walk computation downstream.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .core import ProviderOracle


def rank_weights(K: int, log_base: float = 2.0) -> np.ndarray:
    """Edge weights by list rank: 1/log(rank+1) for ranks 1..K."""
    if K < 1:
        raise ValueError("K must be positive")
    rank_plus_one = np.arange(2, K + 2, dtype=np.float64)
    return np.log(log_base) / np.log(rank_plus_one)


@dataclass(frozen=True)
class RecNet:
    """Sparse adjacency of the provider graph plus its row-stochastic form.

    ``adjacency`` holds the raw rank weights (K nonzeros per row),
    ``normalized`` the row-stochastic version, and ``transposed`` the CSR
    transpose of ``normalized`` kept ready for repeated matvec products.
    """

    adjacency: sp.csr_matrix
    normalized: sp.csr_matrix
    transposed: sp.csr_matrix
    K: int

    @property
    def n(self) -> int:
        return int(self.adjacency.shape[0])


def _assemble(indices: np.ndarray, n: int, K: int, log_base: float) -> RecNet:
    data = np.tile(rank_weights(K, log_base), n)
    indptr = np.arange(0, n * K + 1, K, dtype=np.int64)
    A = sp.csr_matrix((data, indices.astype(np.int64), indptr), shape=(n, n))
    A.sort_indices()
    row_sums = np.asarray(A.sum(axis=1)).ravel()
    norm = sp.diags(1.0 / row_sums) @ A
    norm = sp.csr_matrix(norm)
    norm.sort_indices()
    transposed = sp.csr_matrix(norm.transpose())
    transposed.sort_indices()
    return RecNet(adjacency=A, normalized=norm, transposed=transposed, K=K)


def build_network(
    oracle: ProviderOracle,
    n: int | None = None,
    *,
    log_base: float = 2.0,
    threads: int = 1,
) -> RecNet:
    """Query the oracle once per item and assemble the weighted graph.

    Issues exactly n queries.  ``threads > 1`` is only allowed for oracles
    declared reentrant; rows are written by index so the result does not
    depend on scheduling.
    """
    if n is None:
        n = oracle.n
    elif n != oracle.n:
        raise ValueError(f"requested n={n} but oracle covers {oracle.n} items")
    K = oracle.K
    indices = np.empty(n * K, dtype=np.int64)

    def fill(i: int) -> None:
        indices[i * K : (i + 1) * K] = oracle.query(i)

    if threads > 1:
        if not oracle.reentrant:
            raise ValueError("oracle is not reentrant; cannot build with threads > 1")
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, range(n)))
    else:
        for i in range(n):
            fill(i)
    return _assemble(indices, n, K, log_base)


def out_neighbors(net: RecNet, i: int) -> list[tuple[int, float]]:
    """The K (item, normalized weight) pairs of row i, descending weight."""
    if not 0 <= i < net.n:
        raise ValueError(f"item {i} out of range [0, {net.n})")
    row = net.normalized.getrow(i)
    order = np.argsort(-row.data, kind="stable")
    return [(int(row.indices[k]), float(row.data[k])) for k in order]


def save_edges(net: RecNet, path: str | Path) -> None:
    """Write the graph as (source, target, rank) integer rows, one per edge."""
    path = Path(path)
    lines = []
    for i in range(net.n):
        for rank0, (j, _w) in enumerate(out_neighbors(net, i)):
            lines.append(f"{i},{j},{rank0 + 1}\n")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(lines))
    tmp.replace(path)


def load_edges(
    path: str | Path, *, n: int | None = None, log_base: float = 2.0
) -> RecNet:
    """Rebuild a network from a (source, target, rank) edge file, bit-exactly."""
    raw = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    if raw.shape[1] != 3:
        raise ValueError("edge file must have exactly three integer columns")
    sources, targets, ranks = raw[:, 0], raw[:, 1], raw[:, 2]
    if n is None:
        n = int(max(sources.max(), targets.max())) + 1
    counts = np.bincount(sources, minlength=n)
    if counts.min() != counts.max():
        raise ValueError("every source must have the same number of edges")
    K = int(counts[0])
    if ranks.min() != 1 or ranks.max() != K:
        raise ValueError(f"ranks must cover 1..{K}")
    order = np.lexsort((ranks, sources))
    indices = targets[order]
    return _assemble(indices, n, K, log_base)
