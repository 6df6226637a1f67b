import os
from pathlib import Path

import numpy as np
import pytest

from privrec.core import Catalog, ProviderOracle

DATA_ROOT = Path(os.environ.get("PRIVREC_DATA", Path(__file__).parent / "data"))


def raw_data_path(name: str) -> Path | None:
    """Location of a raw dataset, or None when it is not available locally."""
    candidates = {
        "movielens": DATA_ROOT / "ml-100k",
        "lastfm": DATA_ROOT / "lastfm",
        "amazon": DATA_ROOT / "amazon",
        "adult": DATA_ROOT / "adult",
    }
    path = candidates[name]
    markers = {
        "movielens": path / "u.data",
        "lastfm": path / "user_artists.dat",
        "amazon": None,
        "adult": path / "adult.data",
    }
    if name == "amazon":
        if path.is_dir() and any(path.glob("*.csv")):
            return path
        return None
    return path if markers[name].exists() else None


def require_raw(name: str) -> Path:
    path = raw_data_path(name)
    if path is None:
        pytest.skip(
            f"raw {name} data not found under {DATA_ROOT} "
            f"(set PRIVREC_DATA or run scripts/fetch_data.py)"
        )
    return path


def random_oracle_table(n: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """A deterministic synthetic provider: random K-lists without the source."""
    table = np.empty((n, K), dtype=np.int64)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        table[i] = rng.permutation(others)[:K]
    return table


def random_oracle(n: int, K: int, rng: np.random.Generator, **kwargs) -> ProviderOracle:
    return ProviderOracle.from_table(random_oracle_table(n, K, rng), **kwargs)


def random_catalog(
    n: int, n_groups: int, rng: np.random.Generator, min_per_group: int = 1
) -> Catalog:
    """Random labels with at least ``min_per_group`` items in every group."""
    while True:
        groups = rng.integers(0, n_groups, n)
        if np.bincount(groups, minlength=n_groups).min() >= min_per_group:
            return Catalog(groups, tuple(f"g{j}" for j in range(n_groups)))


def synthetic_interactions(
    rng: np.random.Generator, m: int = 80, n: int = 60, per_user: int = 12
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Blocky implicit feedback with timestamps: (users, items, timestamps).

    Users in the first half prefer the first half of the items, with some
    noise, so similarity structure is learnable and item popularity is skewed.
    """
    users, items, stamps = [], [], []
    t = 0
    for u in range(m):
        block_lo = 0 if u < m // 2 else n // 2
        pool = np.arange(block_lo, block_lo + n // 2)
        own = rng.choice(pool, size=per_user - 2, replace=False)
        other = np.setdiff1d(np.arange(n), pool)
        noise = rng.choice(other, size=2, replace=False)
        for it in np.concatenate([own, noise]):
            users.append(u)
            items.append(int(it))
            t += 1
            stamps.append(t)
    return (
        np.array(users, dtype=np.int64),
        np.array(items, dtype=np.int64),
        np.array(stamps, dtype=np.int64),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


def write_fake_movielens(root: Path, rng: np.random.Generator, m=40, n=30) -> Path:
    """A tiny corpus in the MovieLens-100k file layout."""
    root.mkdir(parents=True, exist_ok=True)
    users, items, stamps = synthetic_interactions(rng, m=m, n=n, per_user=6)
    lines = []
    for u, i, t in zip(users, items, stamps):
        lines.append(f"{u + 1}\t{i + 1}\t{int(rng.integers(1, 6))}\t{874000000 + t}\n")
    (root / "u.data").write_text("".join(lines))
    meta = []
    for i in range(n):
        year = 1985 if i % 3 == 0 else 1995
        rest = "|".join(["0"] * 19)
        meta.append(f"{i + 1}|Movie {i + 1} ({year})|01-Jan-{year}||http://e.g/{i + 1}|{rest}\n")
    (root / "u.item").write_text("".join(meta), encoding="latin-1")
    return root
