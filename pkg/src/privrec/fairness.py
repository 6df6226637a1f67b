"""Group-share fairness metrics and quota-constrained greedy selection.

The selection rule is shared by every constrained method in this package:
scan a scored candidate ordering and take each item unless doing so would
make some group's minimum quota unreachable in the slots that remain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Set

import numpy as np

from .core import Catalog, RecList


@dataclass(frozen=True)
class FairnessConfig:
    """List length ``K``, per-group minimum ``tau``, and the group count.

    ``tau`` of 0 disables the constraint; ``tau * n_groups`` can never exceed
    ``K`` because every group must fit its quota in one list.
    """

    K: int
    tau: int
    n_groups: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")
        if self.n_groups < 2:
            raise ValueError("fairness-constrained runs need at least two groups")
        if self.tau < 0 or self.tau * self.n_groups > self.K:
            raise ValueError(
                f"tau={self.tau} must satisfy 0 <= tau * {self.n_groups} <= K={self.K}"
            )


def list_group_counts(items: Sequence[int], catalog: Catalog) -> np.ndarray:
    """Per-group item counts of a list, over all catalog groups."""
    idx = np.asarray(list(items), dtype=np.int64)
    if idx.size == 0:
        return np.zeros(catalog.n_groups, dtype=np.int64)
    return np.bincount(catalog.group_of[idx], minlength=catalog.n_groups)


def least_ratio(items: Sequence[int], catalog: Catalog) -> float:
    """Smallest group share of the list; groups absent from the list count as 0."""
    items = list(items)
    if not items:
        raise ValueError("least_ratio of an empty list is undefined")
    counts = list_group_counts(items, catalog)
    return float(counts.min()) / len(items)


def entropy(items: Sequence[int], catalog: Catalog) -> float:
    """Base-2 entropy of the list's group shares, scaled to [0, 1].

    Normalization is by log2 of the number of catalog groups, so 1.0 means
    exactly uniform shares and 0.0 a single-group list.
    """
    items = list(items)
    if not items:
        raise ValueError("entropy of an empty list is undefined")
    if catalog.n_groups < 2:
        raise ValueError("entropy needs at least two groups")
    counts = list_group_counts(items, catalog)
    p = counts[counts > 0] / len(items)
    h = float(-(p * np.log2(p)).sum())
    return h / float(np.log2(catalog.n_groups))


def can_add(
    partial: Sequence[int], candidate: int, cfg: FairnessConfig, catalog: Catalog
) -> bool:
    """True if taking ``candidate`` still lets every group reach its quota.

    Counting the candidate as taken, the remaining per-group deficits must fit
    in the slots left after it:

        sum_a max(0, tau - c_a)  <=  K - len(partial) - 1

    where ``c_a`` counts group ``a`` over ``partial`` plus the candidate.
    """
    partial = list(partial)
    if len(partial) >= cfg.K:
        raise ValueError("list is already full")
    if candidate in partial:
        raise ValueError(f"candidate {candidate} is already in the list")
    counts = list_group_counts(partial + [int(candidate)], catalog)
    deficit = np.maximum(0, cfg.tau - counts).sum()
    return int(deficit) <= cfg.K - len(partial) - 1


def fair_greedy_select(
    candidates: Iterable[int],
    exclude: Set[int],
    cfg: FairnessConfig,
    catalog: Catalog,
) -> RecList:
    """Scan candidates in order, taking every admissible item until K are chosen.

    An item is skipped when it is excluded, already chosen, or rejected by
    :func:`can_add`.  If the candidates run out first, the partial list is
    returned with ``feasible=False``.
    """
    if cfg.n_groups != catalog.n_groups:
        raise ValueError("config and catalog disagree on the number of groups")
    group_of = catalog.group_of
    excluded = exclude if isinstance(exclude, (set, frozenset)) else {int(i) for i in exclude}
    chosen: list[int] = []
    taken: set[int] = set()
    counts = np.zeros(cfg.n_groups, dtype=np.int64)
    deficit = cfg.tau * cfg.n_groups
    for raw in candidates:
        i = int(raw)
        if i in taken or i in excluded:
            continue
        g = group_of[i]
        # Deficit shrinks by one exactly when this group is still short.
        new_deficit = deficit - 1 if counts[g] < cfg.tau else deficit
        if new_deficit <= cfg.K - len(chosen) - 1:
            chosen.append(i)
            taken.add(i)
            counts[g] += 1
            deficit = new_deficit
            if len(chosen) == cfg.K:
                return RecList(tuple(chosen), feasible=True)
    return RecList(tuple(chosen), feasible=False)
