"""Corpus loading, preprocessing, group labeling, and evaluation splits.

Loaders parse the raw distribution files into dense 0-based indices and keep
the raw-id maps for reporting.  Preprocessing (dedup, k-core) and group
labeling run on the dense form; ``prepare`` writes a canonical processed
directory whose counts are audited against the published dataset sizes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .core import Catalog

EXPECTED_COUNTS = {
    "movielens": {"users": 943, "items": 1682, "interactions": 100000},
    "lastfm": {"users": 1797, "items": 1507, "interactions": 62376},
    "amazon": {"users": 1395, "items": 1171, "interactions": 25445},
    "adult": {"items": 39190, "features": 112},
}

POPULARITY_THRESHOLD = 50
PERIOD_CUTOFF_YEAR = 1990
KCORE_K = 10


class CountMismatchError(ValueError):
    """Processed counts do not match the published dataset sizes."""


@dataclass(frozen=True)
class Interactions:
    """Implicit feedback as dense (user, item) pairs with optional timestamps."""

    users: np.ndarray
    items: np.ndarray
    timestamps: np.ndarray | None
    n_users: int
    n_items: int
    user_ids: np.ndarray
    item_ids: np.ndarray

    @property
    def n_interactions(self) -> int:
        return int(self.users.shape[0])

    def matrix(self) -> sp.csr_matrix:
        """Binary user x item matrix."""
        m = sp.csr_matrix(
            (np.ones(self.n_interactions), (self.users, self.items)),
            shape=(self.n_users, self.n_items),
        )
        m.sum_duplicates()
        m.data[:] = 1.0
        m.sort_indices()
        return m


def interactions_from_raw(raw_users, raw_items, timestamps=None) -> Interactions:
    """Map raw ids to dense indices (sorted raw-id order) and keep reverse maps."""
    raw_users = np.asarray(raw_users)
    raw_items = np.asarray(raw_items)
    if raw_users.shape != raw_items.shape or raw_users.ndim != 1:
        raise ValueError("raw user and item arrays must be 1-D and equal length")
    uniq_u, users = np.unique(raw_users, return_inverse=True)
    uniq_i, items = np.unique(raw_items, return_inverse=True)
    ts = None if timestamps is None else np.asarray(timestamps, dtype=np.int64)
    return Interactions(
        users=users.astype(np.int64),
        items=items.astype(np.int64),
        timestamps=ts,
        n_users=len(uniq_u),
        n_items=len(uniq_i),
        user_ids=uniq_u,
        item_ids=uniq_i,
    )


def _subset(inter: Interactions, keep: np.ndarray) -> Interactions:
    """Keep the flagged interactions and re-densify both id spaces."""
    users = inter.users[keep]
    items = inter.items[keep]
    ts = None if inter.timestamps is None else inter.timestamps[keep]
    uniq_u, new_users = np.unique(users, return_inverse=True)
    uniq_i, new_items = np.unique(items, return_inverse=True)
    return Interactions(
        users=new_users.astype(np.int64),
        items=new_items.astype(np.int64),
        timestamps=ts,
        n_users=len(uniq_u),
        n_items=len(uniq_i),
        user_ids=inter.user_ids[uniq_u],
        item_ids=inter.item_ids[uniq_i],
    )


def dedupe(inter: Interactions) -> Interactions:
    """Collapse repeated (user, item) pairs, keeping the earliest timestamp."""
    pair = inter.users * np.int64(inter.n_items) + inter.items
    if inter.timestamps is None:
        order = np.argsort(pair, kind="stable")
    else:
        order = np.lexsort((inter.timestamps, pair))
    sorted_pair = pair[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_pair[1:] != sorted_pair[:-1]
    keep = np.zeros(len(order), dtype=bool)
    keep[order[first]] = True
    # No ids vanish, so reuse the subset helper purely for row filtering.
    return _subset(inter, keep)


def k_core(inter: Interactions, k: int) -> Interactions:
    """Iteratively drop users and items with fewer than k interactions.

    Converges to the unique maximal sub-matrix where every remaining user and
    item has at least k interactions; applying it twice equals applying once.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    keep = np.ones(inter.n_interactions, dtype=bool)
    while True:
        uc = np.bincount(inter.users[keep], minlength=inter.n_users)
        ic = np.bincount(inter.items[keep], minlength=inter.n_items)
        bad = keep & ((uc[inter.users] < k) | (ic[inter.items] < k))
        if not bad.any():
            break
        keep &= ~bad
    if not keep.any():
        raise ValueError(f"{k}-core is empty: every user or item fell below {k} interactions")
    return _subset(inter, keep)


def popularity_catalog(
    inter: Interactions, threshold: int = POPULARITY_THRESHOLD
) -> Catalog:
    """Group 1 (protected) = items with fewer than ``threshold`` interactions."""
    counts = np.bincount(inter.items, minlength=inter.n_items)
    return Catalog(
        group_of=(counts < threshold).astype(np.int64),
        group_names=("popular", "rare"),
    )


def period_catalog(years: np.ndarray, cutoff: int = PERIOD_CUTOFF_YEAR) -> Catalog:
    """Group 1 (protected) = items released before ``cutoff``; unknown years group 0."""
    years = np.asarray(years, dtype=np.float64)
    protected = np.where(np.isnan(years), False, years < cutoff)
    return Catalog(
        group_of=protected.astype(np.int64),
        group_names=(f"{cutoff}_or_later", f"before_{cutoff}"),
    )


def _parse_int_table(path: Path, sep: str, names: list[str], skiprows: int = 0) -> pd.DataFrame:
    """Integer table reader that reports the first malformed line."""
    try:
        df = pd.read_csv(path, sep=sep, names=names, header=None, dtype=str, skiprows=skiprows)
    except pd.errors.ParserError as e:
        raise ValueError(f"{path}: {e}") from e
    for col in names:
        vals = pd.to_numeric(df[col], errors="coerce")
        bad = vals.isna()
        if bad.any():
            lineno = int(np.flatnonzero(bad.to_numpy())[0]) + 1 + skiprows
            raise ValueError(f"{path}:{lineno}: malformed value in column '{col}'")
        df[col] = vals.astype(np.int64)
    return df


def load_movielens(path) -> tuple[Interactions, dict[str, Catalog], dict]:
    """Load MovieLens-100k from its distribution directory.

    Returns the implicit interactions, the two selectable group labelings
    (``popularity`` and ``period``), and bookkeeping counts.
    """
    path = Path(path)
    ratings = _parse_int_table(
        path / "u.data", "\t", ["user", "item", "rating", "timestamp"]
    )
    inter = dedupe(
        interactions_from_raw(
            ratings["user"].to_numpy(),
            ratings["item"].to_numpy(),
            ratings["timestamp"].to_numpy(),
        )
    )
    item_meta = pd.read_csv(path / "u.item", sep="|", header=None, encoding="latin-1")
    if item_meta.shape[1] < 3:
        raise ValueError(f"{path / 'u.item'}: expected at least 3 pipe-separated fields")
    year_by_raw: dict[int, float] = {}
    for raw_id, released in zip(item_meta.iloc[:, 0], item_meta.iloc[:, 2]):
        if isinstance(released, str) and len(released) >= 4:
            year_by_raw[int(raw_id)] = float(released[-4:])
        else:
            year_by_raw[int(raw_id)] = np.nan
    years = np.array(
        [year_by_raw.get(int(raw), np.nan) for raw in inter.item_ids], dtype=np.float64
    )
    catalogs = {
        "popularity": popularity_catalog(inter),
        "period": period_catalog(years),
    }
    extras = {
        "missing_release_dates": int(np.isnan(years).sum()),
    }
    return inter, catalogs, extras


def load_lastfm(path) -> Interactions:
    """Load the hetrec LastFM listening pairs (no timestamps)."""
    path = Path(path)
    if path.is_dir():
        path = path / "user_artists.dat"
    df = _parse_int_table(path, "\t", ["user", "item", "weight"], skiprows=1)
    return dedupe(
        interactions_from_raw(df["user"].to_numpy(), df["item"].to_numpy())
    )


def load_amazon(path) -> Interactions:
    """Load an Amazon ratings-only CSV: user,item,rating,timestamp rows."""
    path = Path(path)
    try:
        df = pd.read_csv(
            path, header=None, names=["user", "item", "rating", "timestamp"], dtype=str
        )
    except pd.errors.ParserError as e:
        raise ValueError(f"{path}: {e}") from e
    ts = pd.to_numeric(df["timestamp"], errors="coerce")
    bad = ts.isna() | df["user"].isna() | df["item"].isna()
    if bad.any():
        lineno = int(np.flatnonzero(bad.to_numpy())[0]) + 1
        raise ValueError(f"{path}:{lineno}: malformed row")
    return dedupe(
        interactions_from_raw(
            df["user"].to_numpy(dtype=object),
            df["item"].to_numpy(dtype=object),
            ts.to_numpy(dtype=np.int64),
        )
    )


ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]
ADULT_CONTINUOUS = [
    "age", "fnlwgt", "education-num", "capital-gain", "capital-loss", "hours-per-week",
]


@dataclass(frozen=True)
class AdultRecipe:
    """Knobs for the census-records pipeline (see README for the default rationale)."""

    drop_missing: bool = True
    drop_duplicates: bool = True
    include_fnlwgt: bool = False
    include_sex_feature: bool = False


@dataclass(frozen=True)
class AdultData:
    features: np.ndarray
    feature_names: tuple[str, ...]
    catalog: Catalog
    class_labels: np.ndarray
    n_dropped_missing: int
    n_dropped_duplicates: int


def load_adult(path, recipe: AdultRecipe = AdultRecipe()) -> AdultData:
    """Load the census records: features, sex groups, and income class labels.

    Accepts a single CSV file or a directory holding ``adult.data`` and
    optionally ``adult.test`` (whose comment line and trailing label periods
    are handled).  Missing-value rows are dropped and counted.
    """
    path = Path(path)
    frames = []
    if path.is_dir():
        files = [path / "adult.data"]
        if (path / "adult.test").exists():
            files.append(path / "adult.test")
    else:
        files = [path]
    for f in files:
        df = pd.read_csv(
            f,
            header=None,
            names=ADULT_COLUMNS,
            skipinitialspace=True,
            na_values="?",
            comment="|",
            skip_blank_lines=True,
        )
        frames.append(df)
    df = pd.concat(frames, ignore_index=True)
    df["income"] = df["income"].astype(str).str.rstrip(".").str.strip()
    n0 = len(df)
    if recipe.drop_missing:
        df = df.dropna()
    n_missing = n0 - len(df)
    # fnlwgt is a census sampling weight, not a personal attribute, so it is
    # ignored when deciding whether two records are the same person.
    n1 = len(df)
    if recipe.drop_duplicates:
        df = df.drop_duplicates(subset=[c for c in ADULT_COLUMNS if c != "fnlwgt"])
    n_dup = n1 - len(df)
    df = df.reset_index(drop=True)

    drop_cols = ["income"]
    if not recipe.include_fnlwgt:
        drop_cols.append("fnlwgt")
    if not recipe.include_sex_feature:
        drop_cols.append("sex")
    continuous = [c for c in ADULT_CONTINUOUS if c not in drop_cols]
    categorical = [
        c for c in ADULT_COLUMNS
        if c not in continuous and c not in drop_cols and c not in ADULT_CONTINUOUS
    ]
    blocks = [df[continuous].to_numpy(dtype=np.float64)]
    names = list(continuous)
    for col in categorical:
        values = sorted(df[col].astype(str).unique())
        for v in values:
            blocks.append((df[col].astype(str) == v).to_numpy(dtype=np.float64)[:, None])
            names.append(f"{col}={v}")
    features = np.hstack([b if b.ndim == 2 else b[:, None] for b in blocks])

    sexes = sorted(df["sex"].astype(str).unique())
    if len(sexes) < 2:
        raise ValueError("expected two sex groups in the census records")
    group_of = np.searchsorted(np.array(sexes), df["sex"].astype(str).to_numpy())
    catalog = Catalog(group_of=group_of.astype(np.int64), group_names=tuple(sexes))
    labels = df["income"].astype(str).to_numpy()
    return AdultData(
        features=features,
        feature_names=tuple(names),
        catalog=catalog,
        class_labels=labels,
        n_dropped_missing=int(n_missing),
        n_dropped_duplicates=int(n_dup),
    )


@dataclass(frozen=True)
class Split:
    """Leave-one-out split: per evaluated user, a source item, a held-out
    positive, and the training matrix with every positive removed."""

    users: np.ndarray
    sources: np.ndarray
    positives: np.ndarray
    train: sp.csr_matrix
    n_excluded: int

    def history(self, user: int) -> np.ndarray:
        """All items the user interacted with minus the held-out positive."""
        lo, hi = self.train.indptr[user], self.train.indptr[user + 1]
        return self.train.indices[lo:hi]


def leave_one_out_split(inter: Interactions, seed: int = 0) -> Split:
    """Hold out each user's latest interaction; recommend from the second latest.

    Ordering uses timestamps when available (ties broken by item index) and a
    seeded random arrangement otherwise.  Users with fewer than two
    interactions are excluded from evaluation and counted.
    """
    nnz = inter.n_interactions
    if inter.timestamps is not None:
        key = inter.timestamps
    else:
        key = np.random.default_rng(seed).random(nnz)
    order = np.lexsort((inter.items, key, inter.users))
    users_sorted = inter.users[order]
    boundaries = np.flatnonzero(np.diff(users_sorted)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [nnz]))

    eval_users, sources, positives = [], [], []
    held_out = np.zeros(nnz, dtype=bool)
    n_excluded = 0
    for s, e in zip(starts, ends):
        if e - s < 2:
            n_excluded += 1
            continue
        u = int(users_sorted[s])
        eval_users.append(u)
        positives.append(int(inter.items[order[e - 1]]))
        sources.append(int(inter.items[order[e - 2]]))
        held_out[order[e - 1]] = True

    train = sp.csr_matrix(
        (
            np.ones(int((~held_out).sum())),
            (inter.users[~held_out], inter.items[~held_out]),
        ),
        shape=(inter.n_users, inter.n_items),
    )
    train.sum_duplicates()
    train.data[:] = 1.0
    train.sort_indices()
    return Split(
        users=np.array(eval_users, dtype=np.int64),
        sources=np.array(sources, dtype=np.int64),
        positives=np.array(positives, dtype=np.int64),
        train=train,
        n_excluded=n_excluded,
    )


# ---------------------------------------------------------------------------
# Canonical processed directory


@dataclass
class PreparedDataset:
    kind: str
    catalog: Catalog
    attribute: str
    interactions: Interactions | None = None
    features: np.ndarray | None = None
    class_labels: np.ndarray | None = None
    manifest: dict = field(default_factory=dict)


def audit_counts(kind: str, found: dict) -> None:
    """Hard-fail when processed counts disagree with the published sizes."""
    expected = EXPECTED_COUNTS.get(kind)
    if expected is None:
        return
    mismatches = {
        key: (expected[key], found.get(key))
        for key in expected
        if found.get(key) != expected[key]
    }
    if mismatches:
        detail = "; ".join(
            f"{key}: expected {exp}, found {got}" for key, (exp, got) in mismatches.items()
        )
        raise CountMismatchError(f"{kind} count audit failed: {detail}")


def _write_interactions(inter: Interactions, out: Path) -> None:
    ts = inter.timestamps if inter.timestamps is not None else np.full(
        inter.n_interactions, -1, dtype=np.int64
    )
    df = pd.DataFrame({"user": inter.users, "item": inter.items, "timestamp": ts})
    df.to_csv(out / "interactions.csv", index=False)
    pd.DataFrame({"index": np.arange(inter.n_users), "raw_id": inter.user_ids}).to_csv(
        out / "users.csv", index=False
    )
    pd.DataFrame({"index": np.arange(inter.n_items), "raw_id": inter.item_ids}).to_csv(
        out / "items.csv", index=False
    )


def _write_catalog(catalog: Catalog, attribute: str, out: Path) -> None:
    pd.DataFrame({"item": np.arange(catalog.n), "group": catalog.group_of}).to_csv(
        out / f"item_groups_{attribute}.csv", index=False
    )


def prepare(
    kind: str,
    raw_path,
    out_dir,
    *,
    audit: bool = True,
    adult_recipe: AdultRecipe = AdultRecipe(),
) -> dict:
    """Run the full preprocessing pipeline and write the processed directory.

    Returns the manifest.  With ``audit`` on, count mismatches against the
    published dataset sizes raise :class:`CountMismatchError` before anything
    is interpreted further (the files are still written for inspection).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"kind": kind}

    if kind == "movielens":
        inter, catalogs, extras = load_movielens(raw_path)
        manifest["default_attribute"] = "popularity"
        manifest.update(extras)
    elif kind == "lastfm":
        inter = k_core(load_lastfm(raw_path), KCORE_K)
        catalogs = {"popularity": popularity_catalog(inter)}
        manifest["default_attribute"] = "popularity"
        manifest["kcore_k"] = KCORE_K
    elif kind == "amazon":
        inter = k_core(load_amazon(raw_path), KCORE_K)
        catalogs = {"popularity": popularity_catalog(inter)}
        manifest["default_attribute"] = "popularity"
        manifest["kcore_k"] = KCORE_K
    elif kind == "adult":
        adult = load_adult(raw_path, adult_recipe)
        np.save(out / "features.npy", adult.features)
        pd.DataFrame(
            {"item": np.arange(len(adult.class_labels)), "label": adult.class_labels}
        ).to_csv(out / "class_labels.csv", index=False)
        _write_catalog(adult.catalog, "sex", out)
        manifest.update(
            {
                "default_attribute": "sex",
                "counts": {
                    "items": int(adult.features.shape[0]),
                    "features": int(adult.features.shape[1]),
                },
                "attributes": {
                    "sex": {
                        "group_names": list(adult.catalog.group_names),
                        "group_sizes": [int(c) for c in adult.catalog.group_counts],
                    }
                },
                "dropped_missing": adult.n_dropped_missing,
                "dropped_duplicates": adult.n_dropped_duplicates,
                "recipe": dataclasses.asdict(adult_recipe),
                "feature_names": list(adult.feature_names),
            }
        )
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        if audit:
            audit_counts(kind, manifest["counts"])
        return manifest
    else:
        raise ValueError(f"unknown dataset kind: {kind!r}")

    manifest["counts"] = {
        "users": inter.n_users,
        "items": inter.n_items,
        "interactions": inter.n_interactions,
    }
    manifest["timestamps"] = inter.timestamps is not None
    manifest["attributes"] = {
        name: {
            "group_names": list(cat.group_names),
            "group_sizes": [int(c) for c in cat.group_counts],
        }
        for name, cat in catalogs.items()
    }
    _write_interactions(inter, out)
    for name, cat in catalogs.items():
        _write_catalog(cat, name, out)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    if audit:
        audit_counts(kind, manifest["counts"])
    return manifest


def load_prepared(prepared_dir, attribute: str | None = None) -> PreparedDataset:
    """Load a processed directory written by :func:`prepare`."""
    d = Path(prepared_dir)
    manifest = json.loads((d / "manifest.json").read_text())
    kind = manifest["kind"]
    attribute = attribute or manifest["default_attribute"]
    meta = manifest["attributes"].get(attribute)
    if meta is None:
        raise ValueError(
            f"attribute {attribute!r} not in prepared dataset; "
            f"available: {sorted(manifest['attributes'])}"
        )
    groups = pd.read_csv(d / f"item_groups_{attribute}.csv")
    catalog = Catalog(
        group_of=groups["group"].to_numpy(dtype=np.int64),
        group_names=tuple(meta["group_names"]),
    )
    if kind == "adult":
        features = np.load(d / "features.npy")
        labels = pd.read_csv(d / "class_labels.csv")["label"].to_numpy()
        return PreparedDataset(
            kind=kind,
            catalog=catalog,
            attribute=attribute,
            features=features,
            class_labels=labels,
            manifest=manifest,
        )
    df = pd.read_csv(d / "interactions.csv")
    users_map = pd.read_csv(d / "users.csv")["raw_id"].to_numpy()
    items_map = pd.read_csv(d / "items.csv")["raw_id"].to_numpy()
    ts = df["timestamp"].to_numpy(dtype=np.int64)
    inter = Interactions(
        users=df["user"].to_numpy(dtype=np.int64),
        items=df["item"].to_numpy(dtype=np.int64),
        timestamps=None if (ts < 0).all() else ts,
        n_users=len(users_map),
        n_items=len(items_map),
        user_ids=users_map,
        item_ids=items_map,
    )
    return PreparedDataset(
        kind=kind,
        catalog=catalog,
        attribute=attribute,
        interactions=inter,
        manifest=manifest,
    )
