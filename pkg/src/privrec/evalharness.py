"""Offline evaluation: ranking metrics, posthoc baselines, and sweeps.

The sweep orchestration reproduces the fairness/performance trade-off
protocol: leave-one-out recall and nDCG for the implicit-feedback corpora,
same-class precision for the census records, with per-list least ratio and
entropy averaged over evaluated users.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Catalog, InfeasibleConstraintError, ProviderOracle, RecList
from .datasets import PreparedDataset, Split, leave_one_out_split
from .fairness import FairnessConfig, entropy, fair_greedy_select, least_ratio
from .privaterank import PPRParams, ppr_many, rank_items, select_from_scores
from .privatewalk import WalkParams, private_walk_recommend
from .providers import bpr_provider, cosine_provider, knn_provider, train_bpr
from .recnet import build_network

METHODS = ("provider", "privaterank", "privatewalk", "random", "oracle")
TRADEOFF_FIELDS = (
    "method", "tau", "metric_name", "metric_value",
    "least_ratio", "entropy", "queries", "infeasible_count",
)
SENSITIVITY_FIELDS = (
    "method", "param", "param_value", "tau", "metric_name", "metric_value",
    "normalized_value", "least_ratio", "entropy", "queries", "infeasible_count",
)


# ---------------------------------------------------------------------------
# Per-list metrics


def recall_at_k(items: Sequence[int], positive: int) -> int:
    """1 iff the held-out positive appears anywhere in the list."""
    return int(int(positive) in set(int(i) for i in items))


def ndcg_at_k(items: Sequence[int], positive: int) -> float:
    """1/log2(rank+1) for the positive's 1-based rank, 0 if absent.

    With a single held-out positive the ideal DCG is 1, so no further
    normalization is needed.
    """
    for rank0, item in enumerate(items):
        if int(item) == int(positive):
            return float(1.0 / np.log2(rank0 + 2))
    return 0.0


def precision_same_label(items: Sequence[int], source: int, labels: np.ndarray) -> float:
    """Fraction of the list sharing the source item's class label."""
    items = list(items)
    if not items:
        raise ValueError("precision of an empty list is undefined")
    src = labels[int(source)]
    return float(np.mean([labels[int(i)] == src for i in items]))


# ---------------------------------------------------------------------------
# Posthoc baselines


def random_baseline(
    cfg: FairnessConfig, catalog: Catalog, history: Iterable[int], seed
) -> RecList:
    """Quota-constrained selection over a seeded uniform item permutation.

    ``history`` must contain the source item; the baseline has no other way
    to know it.
    """
    perm = np.random.default_rng(seed).permutation(catalog.n)
    return fair_greedy_select(perm, {int(i) for i in history}, cfg, catalog)


def oracle_baseline(
    scores: np.ndarray, cfg: FairnessConfig, catalog: Catalog, history: Iterable[int]
) -> RecList:
    """Quota-constrained selection over the backbone's full score ranking.

    Uses information a black-box client cannot see (the complete ranking),
    so it upper-bounds what the constrained methods can reach.  ``history``
    must contain the source item.
    """
    return fair_greedy_select(
        rank_items(np.asarray(scores, dtype=np.float64)),
        {int(i) for i in history},
        cfg,
        catalog,
    )


# ---------------------------------------------------------------------------
# Records


@dataclass(frozen=True)
class TradeoffRecord:
    method: str
    tau: int
    metric_name: str
    metric_value: float
    least_ratio: float
    entropy: float
    queries: int
    infeasible_count: int


@dataclass(frozen=True)
class SensitivityRecord:
    method: str
    param: str
    param_value: float
    tau: int
    metric_name: str
    metric_value: float
    normalized_value: float
    least_ratio: float
    entropy: float
    queries: int
    infeasible_count: int


def write_records_csv(records, path, fields) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for r in records:
            writer.writerow([getattr(r, f) for f in fields])
    tmp.replace(path)


def read_tradeoff_csv(path) -> list[TradeoffRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                TradeoffRecord(
                    method=row["method"],
                    tau=int(row["tau"]),
                    metric_name=row["metric_name"],
                    metric_value=float(row["metric_value"]),
                    least_ratio=float(row["least_ratio"]),
                    entropy=float(row["entropy"]),
                    queries=int(row["queries"]),
                    infeasible_count=int(row["infeasible_count"]),
                )
            )
    return out


# ---------------------------------------------------------------------------
# Evaluation units


@dataclass(frozen=True)
class EvalTask:
    """What to evaluate: one unit per list request.

    ``histories`` is None when only the source item is excluded (the default
    protocol, under which a perfectly provider-faithful method scores exactly
    like the provider).  ``positives`` is None for the label-precision corpora.
    """

    sources: np.ndarray
    positives: np.ndarray | None
    histories: list[np.ndarray] | None
    labels: np.ndarray | None
    K: int

    @property
    def n_units(self) -> int:
        return int(self.sources.shape[0])

    @property
    def metric_names(self) -> tuple[str, ...]:
        if self.positives is not None:
            return (f"recall@{self.K}", f"ndcg@{self.K}")
        return ("precision",)

    def history(self, idx: int) -> Iterable[int]:
        if self.histories is None:
            return (int(self.sources[idx]),)
        return self.histories[idx]

    def perf(self, idx: int, items: Sequence[int]) -> tuple[float, ...]:
        if self.positives is not None:
            pos = int(self.positives[idx])
            return (float(recall_at_k(items, pos)), ndcg_at_k(items, pos))
        return (precision_same_label(items, int(self.sources[idx]), self.labels),)


def task_from_split(split: Split, K: int, *, exclude_history: bool = False) -> EvalTask:
    histories = None
    if exclude_history:
        histories = [split.history(int(u)) for u in split.users]
    return EvalTask(
        sources=split.sources,
        positives=split.positives,
        histories=histories,
        labels=None,
        K=K,
    )


def task_for_items(
    n: int, labels: np.ndarray, K: int, *, sample: int | None, seed: int = 0
) -> EvalTask:
    if sample is None or sample >= n:
        sources = np.arange(n, dtype=np.int64)
    else:
        sources = np.sort(np.random.default_rng(seed).choice(n, size=sample, replace=False))
    return EvalTask(sources=sources, positives=None, histories=None, labels=labels, K=K)


# ---------------------------------------------------------------------------
# Cell evaluation (one method at one or more tau values)


@dataclass
class CellStats:
    perf: dict[str, float]
    least_ratio: float
    entropy: float
    queries: int
    infeasible: int
    n_evaluated: int
    detail: dict = field(default_factory=dict)


class _Accumulator:
    """Fixed-size per-unit buffers so aggregation order never varies."""

    def __init__(self, task: EvalTask, catalog: Catalog):
        self.task = task
        self.catalog = catalog
        names = task.metric_names
        self.perf = {name: np.full(task.n_units, np.nan) for name in names}
        self.lr = np.full(task.n_units, np.nan)
        self.ent = np.full(task.n_units, np.nan)
        self.infeasible = 0

    def add(self, idx: int, rec: RecList | None) -> None:
        if rec is None or not rec.feasible:
            self.infeasible += 1
            return
        values = self.task.perf(idx, rec.items)
        for name, v in zip(self.task.metric_names, values):
            self.perf[name][idx] = v
        self.lr[idx] = least_ratio(rec.items, self.catalog)
        self.ent[idx] = entropy(rec.items, self.catalog)

    def stats(self, queries: int) -> CellStats:
        evaluated = int(np.isfinite(self.lr).sum())
        with np.errstate(invalid="ignore"):
            perf = {
                name: float(np.nanmean(vals)) if evaluated else float("nan")
                for name, vals in self.perf.items()
            }
            lr = float(np.nanmean(self.lr)) if evaluated else float("nan")
            ent = float(np.nanmean(self.ent)) if evaluated else float("nan")
        return CellStats(
            perf=perf,
            least_ratio=lr,
            entropy=ent,
            queries=queries,
            infeasible=self.infeasible,
            n_evaluated=evaluated,
        )


def _eval_provider(oracle: ProviderOracle, task: EvalTask, catalog: Catalog) -> CellStats:
    acc = _Accumulator(task, catalog)
    before = oracle.query_count
    for idx in range(task.n_units):
        items = oracle.query(int(task.sources[idx]))
        acc.add(idx, RecList(tuple(int(i) for i in items)))
    return acc.stats(queries=oracle.query_count - before)


def _eval_oracle_baseline(
    scores_fn, task: EvalTask, catalog: Catalog, cfgs: dict[int, FairnessConfig]
) -> dict[int, CellStats]:
    accs = {tau: _Accumulator(task, catalog) for tau in cfgs}
    for idx in range(task.n_units):
        src = int(task.sources[idx])
        s = np.asarray(scores_fn(src), dtype=np.float64)
        for tau, cfg in cfgs.items():
            accs[tau].add(
                idx, select_from_scores(s, src, cfg, catalog, task.history(idx))
            )
    return {tau: acc.stats(queries=0) for tau, acc in accs.items()}


def _eval_random(
    task: EvalTask, catalog: Catalog, cfgs: dict[int, FairnessConfig], seed: int
) -> dict[int, CellStats]:
    accs = {tau: _Accumulator(task, catalog) for tau in cfgs}
    for idx in range(task.n_units):
        src = int(task.sources[idx])
        perm = np.random.default_rng([seed, idx]).permutation(catalog.n)
        hist = {int(i) for i in task.history(idx)}
        hist.add(src)
        for tau, cfg in cfgs.items():
            accs[tau].add(idx, fair_greedy_select(perm, hist, cfg, catalog))
    return {tau: acc.stats(queries=0) for tau, acc in accs.items()}


def _eval_privaterank(
    net,
    task: EvalTask,
    catalog: Catalog,
    cfgs: dict[int, FairnessConfig],
    params: PPRParams,
    *,
    build_queries: int,
    chunk: int = 256,
) -> dict[int, CellStats]:
    accs = {tau: _Accumulator(task, catalog) for tau in cfgs}
    for start in range(0, task.n_units, chunk):
        idxs = range(start, min(start + chunk, task.n_units))
        scores = ppr_many(net, task.sources[list(idxs)], params)
        for row, idx in enumerate(idxs):
            src = int(task.sources[idx])
            for tau, cfg in cfgs.items():
                accs[tau].add(
                    idx,
                    select_from_scores(scores[row], src, cfg, catalog, task.history(idx)),
                )
    return {tau: acc.stats(queries=build_queries) for tau, acc in accs.items()}


def _eval_privatewalk(
    base_oracle: ProviderOracle,
    task: EvalTask,
    catalog: Catalog,
    cfgs: dict[int, FairnessConfig],
    walk_params: WalkParams,
    seeds: Sequence[int],
    *,
    threads: int = 1,
) -> dict[int, CellStats]:
    if threads > 1 and not base_oracle.reentrant:
        threads = 1
    out: dict[int, CellStats] = {}
    for tau, cfg in cfgs.items():
        per_seed: list[CellStats] = []
        queries = 0
        for walk_seed in seeds:
            oracle = base_oracle.with_fresh_counter()
            acc = _Accumulator(task, catalog)

            def one(idx: int) -> tuple[int, RecList | None]:
                # seeded per (walk seed, unit) so tau cells share trajectories
                # until the constraint first binds
                rng = np.random.default_rng([int(walk_seed), int(idx)])
                try:
                    rec = private_walk_recommend(
                        oracle,
                        int(task.sources[idx]),
                        cfg,
                        catalog,
                        task.history(idx),
                        walk_params,
                        rng=rng,
                        memoize=True,
                    )
                except InfeasibleConstraintError:
                    rec = None
                return idx, rec

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    for idx, rec in pool.map(one, range(task.n_units)):
                        acc.add(idx, rec)
            else:
                for idx in range(task.n_units):
                    acc.add(*one(idx))
            per_seed.append(acc.stats(queries=oracle.query_count))
            queries += oracle.query_count

        names = task.metric_names
        perf = {
            name: float(np.mean([s.perf[name] for s in per_seed])) for name in names
        }
        out[tau] = CellStats(
            perf=perf,
            least_ratio=float(np.mean([s.least_ratio for s in per_seed])),
            entropy=float(np.mean([s.entropy for s in per_seed])),
            queries=queries,
            infeasible=int(sum(s.infeasible for s in per_seed)),
            n_evaluated=per_seed[0].n_evaluated,
            detail={
                "seeds": list(map(int, seeds)),
                "per_seed_perf": {
                    name: [s.perf[name] for s in per_seed] for name in names
                },
                "perf_std": {
                    name: float(np.std([s.perf[name] for s in per_seed]))
                    for name in names
                },
            },
        )
    return out


# ---------------------------------------------------------------------------
# Sweeps


def build_backbone(
    prepared: PreparedDataset,
    provider_kind: str,
    K: int,
    *,
    train=None,
    seed: int = 0,
    bpr_options: dict | None = None,
) -> ProviderOracle:
    """Construct the provider oracle for a prepared dataset."""
    if provider_kind == "knn":
        if prepared.features is None:
            raise ValueError("knn provider needs item features")
        return knn_provider(prepared.features, K)
    if provider_kind == "cosine":
        if train is None:
            raise ValueError("cosine provider needs a training interaction matrix")
        return cosine_provider(train, K)
    if provider_kind == "bpr":
        if train is None:
            raise ValueError("bpr provider needs a training interaction matrix")
        opts = {"dims": 100, "lr": 0.01, "reg": 0.01, "iters": 100}
        opts.update(bpr_options or {})
        factors = train_bpr(train, seed=seed, **opts)
        return bpr_provider(factors, K)
    raise ValueError(f"unknown provider kind: {provider_kind!r}")


def _make_task(
    prepared: PreparedDataset,
    K: int,
    seed: int,
    *,
    sample: int | None,
    exclude_history: bool,
) -> tuple[EvalTask, Split | None]:
    if prepared.kind == "adult" or prepared.interactions is None:
        task = task_for_items(
            prepared.catalog.n, prepared.class_labels, K, sample=sample, seed=seed
        )
        return task, None
    split = leave_one_out_split(prepared.interactions, seed=seed)
    return task_from_split(split, K, exclude_history=exclude_history), split


def run_sweep(
    prepared: PreparedDataset,
    provider_kind: str,
    *,
    methods: Sequence[str] = METHODS,
    taus: Sequence[int] = (0, 1, 2, 3, 4, 5),
    K: int = 10,
    ppr_params: PPRParams | None = None,
    walk_params: WalkParams | None = None,
    walk_seeds: Sequence[int] = (0, 1, 2, 3, 4),
    seed: int = 0,
    sample: int | None = 2000,
    exclude_history: bool = False,
    chunk: int = 256,
    threads: int = 1,
    bpr_options: dict | None = None,
) -> tuple[list[TradeoffRecord], dict]:
    """Evaluate every method at every tau and aggregate the trade-off records.

    Infeasible lists are counted per record instead of failing the sweep.
    Returns the records sorted by (method, tau) and a manifest describing
    exactly what ran.
    """
    ppr_params = ppr_params or PPRParams()
    walk_params = walk_params or WalkParams()
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    catalog = prepared.catalog
    cfgs = {int(tau): FairnessConfig(K=K, tau=int(tau), n_groups=catalog.n_groups) for tau in taus}

    task, split = _make_task(
        prepared, K, seed, sample=sample, exclude_history=exclude_history
    )
    train = split.train if split is not None else None
    base = build_backbone(
        prepared, provider_kind, K, train=train, seed=seed, bpr_options=bpr_options
    )

    records: list[TradeoffRecord] = []
    manifest: dict = {
        "provider": provider_kind,
        "attribute": prepared.attribute,
        "dataset_kind": prepared.kind,
        "K": K,
        "taus": [int(t) for t in taus],
        "ppr": {"c": ppr_params.c, "L": ppr_params.L},
        "walk": {"L_max": walk_params.L_max, "seeds": list(map(int, walk_seeds))},
        "seed": seed,
        "n_units": task.n_units,
        "exclude_history": exclude_history,
        "methods": list(methods),
        "timing_s": {},
        "notes": {
            "queries": "provider: one oracle call per evaluated list; privaterank: "
            "the one-time network build; privatewalk: walk queries summed over seeds; "
            "random/oracle: none",
            "aggregation": "mean per-list metrics over feasible lists; privatewalk "
            "averaged over seeds (std in walk_detail)",
        },
    }
    if split is not None:
        manifest["excluded_users"] = int(split.n_excluded)

    def emit(method: str, tau: int, stats: CellStats) -> None:
        for name in task.metric_names:
            records.append(
                TradeoffRecord(
                    method=method,
                    tau=tau,
                    metric_name=name,
                    metric_value=stats.perf[name],
                    least_ratio=stats.least_ratio,
                    entropy=stats.entropy,
                    queries=stats.queries,
                    infeasible_count=stats.infeasible,
                )
            )

    for method in methods:
        t0 = time.perf_counter()
        if method == "provider":
            stats = _eval_provider(base.with_fresh_counter(), task, catalog)
            for tau in cfgs:
                emit(method, tau, stats)
        elif method == "oracle":
            for tau, stats in _eval_oracle_baseline(base.scores, task, catalog, cfgs).items():
                emit(method, tau, stats)
        elif method == "random":
            for tau, stats in _eval_random(task, catalog, cfgs, seed).items():
                emit(method, tau, stats)
        elif method == "privaterank":
            net_oracle = base.with_fresh_counter()
            net = build_network(net_oracle)
            manifest["network_build_queries"] = net_oracle.query_count
            cells = _eval_privaterank(
                net, task, catalog, cfgs, ppr_params,
                build_queries=net_oracle.query_count, chunk=chunk,
            )
            for tau, stats in cells.items():
                emit(method, tau, stats)
        elif method == "privatewalk":
            cells = _eval_privatewalk(
                base, task, catalog, cfgs, walk_params, walk_seeds, threads=threads
            )
            manifest["walk_detail"] = {str(tau): cells[tau].detail for tau in cells}
            for tau, stats in cells.items():
                emit(method, tau, stats)
        manifest["timing_s"][method] = round(time.perf_counter() - t0, 3)

    records.sort(key=lambda r: (r.method, r.tau, r.metric_name))
    return records, manifest


def sensitivity_sweep(
    prepared: PreparedDataset,
    provider_kind: str,
    param: str,
    values: Sequence[float],
    *,
    tau: int | None = None,
    K: int = 10,
    ppr_params: PPRParams | None = None,
    walk_params: WalkParams | None = None,
    walk_seeds: Sequence[int] = (0, 1, 2, 3, 4),
    seed: int = 0,
    sample: int | None = 2000,
    exclude_history: bool = False,
    chunk: int = 256,
    threads: int = 1,
    bpr_options: dict | None = None,
) -> tuple[list[SensitivityRecord], dict]:
    """Vary one hyperparameter at full fairness and normalize performance.

    ``param`` is ``L`` or ``c`` (truncated-PPR method) or ``L_max`` (walk
    method).  The reported ``normalized_value`` divides by the grid maximum
    of the leading performance metric.
    """
    if param not in ("L", "c", "L_max"):
        raise ValueError("param must be one of 'L', 'c', 'L_max'")
    ppr_params = ppr_params or PPRParams()
    walk_params = walk_params or WalkParams()
    catalog = prepared.catalog
    if tau is None:
        tau = K // catalog.n_groups
    cfg = {int(tau): FairnessConfig(K=K, tau=int(tau), n_groups=catalog.n_groups)}

    task, split = _make_task(
        prepared, K, seed, sample=sample, exclude_history=exclude_history
    )
    train = split.train if split is not None else None
    base = build_backbone(
        prepared, provider_kind, K, train=train, seed=seed, bpr_options=bpr_options
    )
    method = "privatewalk" if param == "L_max" else "privaterank"

    net = None
    build_queries = 0
    if method == "privaterank":
        net_oracle = base.with_fresh_counter()
        net = build_network(net_oracle)
        build_queries = net_oracle.query_count

    cells: list[tuple[float, CellStats]] = []
    for value in values:
        if param == "L":
            p = PPRParams(c=ppr_params.c, L=int(value))
            stats = _eval_privaterank(
                net, task, catalog, cfg, p, build_queries=build_queries, chunk=chunk
            )[tau]
        elif param == "c":
            p = PPRParams(c=float(value), L=ppr_params.L)
            stats = _eval_privaterank(
                net, task, catalog, cfg, p, build_queries=build_queries, chunk=chunk
            )[tau]
        else:
            wp = WalkParams(L_max=int(value), seed=walk_params.seed)
            stats = _eval_privatewalk(
                base, task, catalog, cfg, wp, walk_seeds, threads=threads
            )[tau]
        cells.append((float(value), stats))

    peaks = {
        name: max(stats.perf[name] for _, stats in cells) for name in task.metric_names
    }
    records = []
    for value, stats in cells:
        for name in task.metric_names:
            peak = peaks[name]
            records.append(
                SensitivityRecord(
                    method=method,
                    param=param,
                    param_value=value,
                    tau=int(tau),
                    metric_name=name,
                    metric_value=stats.perf[name],
                    normalized_value=stats.perf[name] / peak if peak > 0 else float("nan"),
                    least_ratio=stats.least_ratio,
                    entropy=stats.entropy,
                    queries=stats.queries,
                    infeasible_count=stats.infeasible,
                )
            )
    manifest = {
        "method": method,
        "param": param,
        "values": [float(v) for v in values],
        "tau": int(tau),
        "provider": provider_kind,
        "dataset_kind": prepared.kind,
        "K": K,
        "seed": seed,
        "n_units": task.n_units,
        "normalized_peaks": peaks,
    }
    return records, manifest
