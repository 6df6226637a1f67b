"""On-demand constrained recommendation by crawling the provider's lists.

Instead of materializing the whole network, each list slot restarts a random
walk at the source item: hop to a rank drawn with probability proportional
to 1/log(rank+1), query the provider at the new item, and stop at the first
visited item the quota rule admits.  A uniform-random fallback keeps the
procedure total when a walk exhausts its step budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import Catalog, InfeasibleConstraintError, ProviderOracle, RecList
from .fairness import FairnessConfig

FALLBACK_DRAWS_PER_ITEM = 50


@dataclass(frozen=True)
class WalkParams:
    """Per-slot walk length cap and the RNG seed."""

    L_max: int = 100
    seed: int | None = None

    def __post_init__(self):
        if self.L_max < 1:
            raise ValueError("L_max must be at least 1")


def rank_hop_weights(K: int) -> np.ndarray:
    """Probability of hopping to each list rank, proportional to 1/log(rank+1).

    Any log base gives the same distribution; the normalization cancels it.
    """
    if K < 1:
        raise ValueError("K must be positive")
    w = 1.0 / np.log2(np.arange(2, K + 2))
    return w / w.sum()


def sample_next_rank(K: int, rng: np.random.Generator) -> int:
    """Draw a 1-based list rank with probability proportional to 1/log(rank+1)."""
    return int(rng.choice(K, p=rank_hop_weights(K))) + 1


def private_walk_recommend(
    oracle: ProviderOracle,
    source: int,
    cfg: FairnessConfig,
    catalog: Catalog,
    history: Iterable[int] = (),
    params: WalkParams = WalkParams(),
    *,
    rng: np.random.Generator | None = None,
    memoize: bool = False,
    memo_limit: int = 4096,
) -> RecList:
    """Fill K slots by repeated provider-graph walks from ``source``.

    Each slot walks up to ``L_max`` hops and takes the first visited item
    that is new, outside ``history``, not the source, and admissible under
    the quota.  A failed walk falls back to uniform item draws (no oracle
    queries), capped at 50 draws per catalog item before declaring the
    constraint infeasible.

    ``memoize`` caches provider lists within this one request so a revisited
    item is not re-queried; the cache is bounded by ``memo_limit`` entries.
    """
    n = catalog.n
    if oracle.n != n:
        raise ValueError("oracle and catalog cover different item counts")
    if not 0 <= source < n:
        raise ValueError(f"source {source} out of range [0, {n})")
    if cfg.n_groups != catalog.n_groups:
        raise ValueError("config and catalog disagree on the number of groups")
    if rng is None:
        rng = np.random.default_rng(params.seed)
    excluded = {int(i) for i in history}
    excluded.add(int(source))
    if n - len(excluded) < cfg.K:
        raise ValueError("not enough items outside the history to fill a list")

    hop_p = rank_hop_weights(oracle.K)
    memo: dict[int, np.ndarray] = {}

    def lists_for(item: int) -> np.ndarray:
        if not memoize:
            return oracle.query(item)
        got = memo.get(item)
        if got is None:
            got = oracle.query(item)
            if len(memo) < memo_limit:
                memo[item] = got
        return got

    group_of = catalog.group_of
    chosen: list[int] = []
    taken: set[int] = set()
    counts = np.zeros(cfg.n_groups, dtype=np.int64)
    deficit = cfg.tau * cfg.n_groups

    def admit(item: int) -> bool:
        nonlocal deficit
        if item in taken or item in excluded:
            return False
        g = group_of[item]
        new_deficit = deficit - 1 if counts[g] < cfg.tau else deficit
        if new_deficit > cfg.K - len(chosen) - 1:
            return False
        chosen.append(item)
        taken.add(item)
        counts[g] += 1
        deficit = new_deficit
        return True

    max_fallback = FALLBACK_DRAWS_PER_ITEM * n
    for _slot in range(cfg.K):
        found = False
        cur = int(source)
        for _hop in range(params.L_max):
            rank = int(rng.choice(oracle.K, p=hop_p))
            cur = int(lists_for(cur)[rank])
            if admit(cur):
                found = True
                break
        if not found:
            for _draw in range(max_fallback):
                candidate = int(rng.integers(n))
                if admit(candidate):
                    found = True
                    break
        if not found:
            raise InfeasibleConstraintError(
                f"could not fill slot {len(chosen) + 1} of {cfg.K} after "
                f"{params.L_max} walk steps and {max_fallback} fallback draws; "
                f"the catalog likely lacks tau={cfg.tau} admissible items in some group"
            )
    return RecList(tuple(chosen), feasible=True)
