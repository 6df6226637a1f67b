"""Item catalogs, recommendation lists, and the black-box provider oracle."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np


class BudgetExhaustedError(RuntimeError):
    """An oracle with a query budget was asked for one call too many."""


class InfeasibleConstraintError(RuntimeError):
    """A per-group minimum cannot be met by any completion of the list."""


@dataclass(frozen=True)
class Catalog:
    """Item universe with one sensitive-group label per item.

    Items are dense 0-based indices.  ``group_of[i]`` is the group index of
    item ``i``; ``group_names`` gives a printable name per group index.
    """

    group_of: np.ndarray
    group_names: tuple[str, ...]

    def __post_init__(self):
        g = np.ascontiguousarray(np.asarray(self.group_of, dtype=np.int64))
        object.__setattr__(self, "group_of", g)
        object.__setattr__(self, "group_names", tuple(self.group_names))
        if g.ndim != 1 or g.size == 0:
            raise ValueError("group_of must be a non-empty 1-D array of group indices")
        if g.min() < 0 or g.max() >= len(self.group_names):
            raise ValueError("group index out of range for group_names")

    @property
    def n(self) -> int:
        return int(self.group_of.shape[0])

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    @cached_property
    def group_counts(self) -> np.ndarray:
        """Number of items per group; sums to ``n``."""
        return np.bincount(self.group_of, minlength=self.n_groups)


@dataclass(frozen=True)
class RecList:
    """An ordered recommendation list plus a constraint-feasibility flag.

    ``feasible`` is False when a constrained selection ran out of admissible
    candidates before reaching the requested length K; ``items`` then holds
    the partial list.
    """

    items: tuple[int, ...]
    feasible: bool = True

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(int(i) for i in self.items))

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[int]:
        return iter(self.items)

    def __getitem__(self, k):
        return self.items[k]

    def __contains__(self, item) -> bool:
        return item in self.items


class ProviderOracle:
    """Opaque top-K recommender with query accounting.

    Wraps ``fn(source) -> sequence of K item indices``.  Every admitted call
    bumps ``query_count`` by exactly one (thread-safe), so the counter audits
    the query cost of any algorithm composed on top.  Returned lists are
    validated: length exactly K, all indices in range, no duplicates, and the
    source item never recommends itself.

    An optional ``budget`` caps the total number of admitted calls; the call
    after the budget is spent raises :class:`BudgetExhaustedError` without
    touching the counter.  ``scores``, when provided by the backbone, exposes
    the full item ranking (``scores(i) -> array of n scores``) that posthoc
    baselines need; black-box consumers must not rely on it.
    """

    def __init__(
        self,
        fn: Callable[[int], Sequence[int]],
        n: int,
        K: int,
        *,
        budget: int | None = None,
        reentrant: bool = True,
        scores: Callable[[int], np.ndarray] | None = None,
    ):
        if K < 1:
            raise ValueError("K must be at least 1")
        if n <= K:
            raise ValueError(
                f"oracle over {n} items cannot return {K} items besides the source; need n > K"
            )
        if budget is not None and budget < 0:
            raise ValueError("budget must be nonnegative")
        self._fn = fn
        self.n = int(n)
        self.K = int(K)
        self.budget = budget
        self.reentrant = bool(reentrant)
        self.scores = scores
        self._count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._count

    @property
    def remaining_budget(self) -> int | None:
        if self.budget is None:
            return None
        return self.budget - self._count

    def query(self, source: int) -> np.ndarray:
        """Return the provider's K-item list for ``source``."""
        source = int(source)
        if not 0 <= source < self.n:
            raise ValueError(f"source item {source} out of range [0, {self.n})")
        with self._lock:
            if self.budget is not None and self._count >= self.budget:
                raise BudgetExhaustedError(
                    f"oracle budget of {self.budget} queries exhausted"
                )
            self._count += 1
        items = np.asarray(self._fn(source), dtype=np.int64)
        self._validate(source, items)
        return items

    __call__ = query

    def _validate(self, source: int, items: np.ndarray) -> None:
        if items.shape != (self.K,):
            raise ValueError(
                f"provider returned {items.shape} items for source {source}, expected ({self.K},)"
            )
        if items.min() < 0 or items.max() >= self.n:
            raise ValueError(f"provider list for source {source} contains out-of-range items")
        if np.unique(items).size != self.K:
            raise ValueError(f"provider list for source {source} contains duplicates")
        if source in items:
            raise ValueError(f"provider list for source {source} contains the source itself")

    def with_fresh_counter(self, budget: int | None = None) -> "ProviderOracle":
        """A new oracle over the same backbone with its own query counter."""
        return ProviderOracle(
            self._fn,
            self.n,
            self.K,
            budget=budget,
            reentrant=self.reentrant,
            scores=self.scores,
        )

    @classmethod
    def from_table(cls, table: np.ndarray, **kwargs) -> "ProviderOracle":
        """Oracle backed by a fixed (n, K) table of precomputed lists."""
        table = np.asarray(table, dtype=np.int64)
        if table.ndim != 2:
            raise ValueError("table must be a 2-D (n, K) array")
        n, K = table.shape
        return cls(lambda i: table[i], n, K, **kwargs)
