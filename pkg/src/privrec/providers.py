"""Provider recommender backbones, each exposed as a black-box oracle.

Three backbones: K-nearest neighbors over standardized item features,
cosine similarity over implicit interaction columns, and inner products of
BPR item factors.  All of them rank with the same deterministic rule:
descending score with ties broken by ascending item index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numba import njit

from .core import ProviderOracle


def standardize_columns(features: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance columns; zero-variance columns are dropped.

    Uses population standard deviation.  Dropping constant columns (with a
    warning) keeps distances finite instead of dividing by zero.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("features must be a 2-D (n, d) array with d >= 1")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite entries")
    std = X.std(axis=0)
    keep = std > 0
    if not keep.any():
        raise ValueError("every feature column has zero variance")
    if not keep.all():
        warnings.warn(
            f"dropping {int((~keep).sum())} zero-variance feature column(s)",
            stacklevel=2,
        )
    X = X[:, keep]
    return (X - X.mean(axis=0)) / std[keep]


def ordered_prefix(scores: np.ndarray, P: int) -> np.ndarray:
    """First P items of the full (descending score, ascending index) ranking.

    Equivalent to ``np.argsort(-scores, kind="stable")[:P]`` but O(n) plus a
    small sort: a partition pass finds everything above the P-th value, and
    boundary ties are resolved by index explicitly.
    """
    n = scores.shape[0]
    if P >= n:
        return np.argsort(-scores, kind="stable")
    part = np.argpartition(-scores, P - 1)[:P]
    boundary = scores[part].min()
    above = part[scores[part] > boundary]
    above = above[np.lexsort((above, -scores[above]))]
    ties = np.flatnonzero(scores == boundary)
    return np.concatenate([above, ties[: P - above.size]])


def top_k_excluding(scores: np.ndarray, source: int, K: int) -> np.ndarray:
    """Indices of the K best scores, source removed, ties by ascending index."""
    order = ordered_prefix(scores, min(K + 1, scores.shape[0]))
    order = order[order != source]
    return order[:K]


def _memoized(fn: Callable[[int], np.ndarray]) -> Callable[[int], np.ndarray]:
    cache: dict[int, np.ndarray] = {}
    def wrapper(i: int) -> np.ndarray:
        got = cache.get(i)
        if got is None:
            got = cache[i] = fn(i)
        return got
    return wrapper


def knn_provider(
    features: np.ndarray, K: int, *, budget: int | None = None, cache: bool = True
) -> ProviderOracle:
    """Nearest-neighbor provider over standardized features.

    The list for item i holds the K items closest to i in Euclidean distance
    after per-column standardization, ascending distance.
    """
    X = standardize_columns(features)
    n = X.shape[0]
    if n <= K:
        raise ValueError(f"need more than K={K} items, got {n}")
    sq = np.einsum("ij,ij->i", X, X)

    def scores(i: int) -> np.ndarray:
        # Negated squared distance: same order as distance, no sqrt needed.
        return -(sq + sq[i] - 2.0 * (X @ X[i]))

    def lists(i: int) -> np.ndarray:
        return top_k_excluding(scores(i), i, K)

    return ProviderOracle(
        _memoized(lists) if cache else lists, n, K, budget=budget, scores=scores
    )


def cosine_provider(
    interactions: sp.spmatrix, K: int, *, budget: int | None = None, cache: bool = True
) -> ProviderOracle:
    """Item-to-item cosine provider over binary interaction columns."""
    X = sp.csc_matrix(interactions, dtype=np.float64, copy=True)
    X.data[:] = 1.0
    n = X.shape[1]
    if n <= K:
        raise ValueError(f"need more than K={K} items, got {n}")
    norms = np.sqrt(np.asarray(X.sum(axis=0)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    Xn = X @ sp.diags(inv)
    Xn = sp.csc_matrix(Xn)

    def scores(i: int) -> np.ndarray:
        col = Xn.getcol(i)
        return (col.T @ Xn).toarray().ravel()

    def lists(i: int) -> np.ndarray:
        return top_k_excluding(scores(i), i, K)

    return ProviderOracle(
        _memoized(lists) if cache else lists, n, K, budget=budget, scores=scores
    )


@dataclass(frozen=True)
class ItemFactors:
    """Latent item factors; user factors are kept for training diagnostics."""

    matrix: np.ndarray
    user_matrix: np.ndarray | None = None

    @property
    def n_items(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def dims(self) -> int:
        return int(self.matrix.shape[1])


@njit(cache=False)
def _bpr_sgd(user_f, item_f, indptr, indices, n_items, lr, reg, iters, seed):  # pragma: no cover
    np.random.seed(seed)
    m = user_f.shape[0]
    d = user_f.shape[1]
    nnz = indices.shape[0]
    for _ in range(iters):
        for _ in range(nnz):
            u = np.random.randint(0, m)
            lo = indptr[u]
            hi = indptr[u + 1]
            if lo == hi or hi - lo == n_items:
                continue
            i = indices[lo + np.random.randint(0, hi - lo)]
            while True:
                j = np.random.randint(0, n_items)
                pos = np.searchsorted(indices[lo:hi], j)
                if pos >= hi - lo or indices[lo + pos] != j:
                    break
            x = 0.0
            for f in range(d):
                x += user_f[u, f] * (item_f[i, f] - item_f[j, f])
            z = 1.0 / (1.0 + np.exp(x))
            for f in range(d):
                wu = user_f[u, f]
                hi_f = item_f[i, f]
                hj_f = item_f[j, f]
                user_f[u, f] += lr * (z * (hi_f - hj_f) - reg * wu)
                item_f[i, f] += lr * (z * wu - reg * hi_f)
                item_f[j, f] += lr * (-z * wu - reg * hj_f)


def train_bpr(
    interactions: sp.spmatrix,
    dims: int = 100,
    lr: float = 0.01,
    reg: float = 0.01,
    iters: int = 100,
    seed: int = 0,
) -> ItemFactors:
    """Bayesian personalized ranking via sequential SGD on sampled triples.

    Each iteration draws one pass of nnz (user, positive, negative) triples:
    user and positive uniform, negative rejection-sampled outside the user's
    positives.  No bias terms; item similarity is the plain inner product of
    the returned factors.  Deterministic for a fixed seed.
    """
    X = sp.csr_matrix(interactions)
    if X.nnz == 0:
        raise ValueError("interactions are empty")
    X.sort_indices()
    m, n = X.shape
    rng = np.random.default_rng(seed)
    user_f = rng.standard_normal((m, dims)) * 0.01
    item_f = rng.standard_normal((n, dims)) * 0.01
    _bpr_sgd(
        user_f,
        item_f,
        X.indptr.astype(np.int64),
        X.indices.astype(np.int64),
        n,
        lr,
        reg,
        iters,
        seed,
    )
    return ItemFactors(matrix=item_f, user_matrix=user_f)


def bpr_provider(
    factors: ItemFactors, K: int, *, budget: int | None = None, cache: bool = True
) -> ProviderOracle:
    """Provider ranking items by inner product with the source's factor."""
    F = np.asarray(factors.matrix, dtype=np.float64)
    n = F.shape[0]
    if n <= K:
        raise ValueError(f"need more than K={K} items, got {n}")

    def scores(i: int) -> np.ndarray:
        return F @ F[i]

    def lists(i: int) -> np.ndarray:
        return top_k_excluding(scores(i), i, K)

    return ProviderOracle(
        _memoized(lists) if cache else lists, n, K, budget=budget, scores=scores
    )


def pairwise_ranking_auc(
    factors: ItemFactors,
    interactions: sp.spmatrix,
    n_samples: int = 10000,
    seed: int = 0,
) -> float:
    """AUC of the BPR model on sampled held-in (user, positive, negative) triples."""
    if factors.user_matrix is None:
        raise ValueError("factors were built without user factors")
    X = sp.csr_matrix(interactions)
    X.sort_indices()
    m, n = X.shape
    rng = np.random.default_rng(seed)
    hits = 0
    total = 0
    for _ in range(n_samples):
        u = int(rng.integers(m))
        lo, hi = X.indptr[u], X.indptr[u + 1]
        if lo == hi or hi - lo == n:
            continue
        i = int(X.indices[lo + rng.integers(hi - lo)])
        while True:
            j = int(rng.integers(n))
            pos = np.searchsorted(X.indices[lo:hi], j)
            if pos >= hi - lo or X.indices[lo + pos] != j:
                break
        xu = factors.user_matrix[u]
        if xu @ factors.matrix[i] > xu @ factors.matrix[j]:
            hits += 1
        total += 1
    return hits / total if total else 0.0
