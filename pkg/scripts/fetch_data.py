#!/usr/bin/env python3
"""Download the four evaluation corpora into the layout the tests expect.

Usage:  python scripts/fetch_data.py [target_dir]

The default target is tests/data (or $PRIVREC_DATA when set).  Needs plain
outbound HTTPS; the library itself never touches the network.
"""

import io
import os
import sys
import urllib.request
import zipfile
from pathlib import Path

ML_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
LASTFM_URL = "https://files.grouplens.org/datasets/hetrec2011/hetrec2011-lastfm-2k.zip"
ADULT_URLS = [
    "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data",
    "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.test",
]
AMAZON_URL = (
    "https://snap.stanford.edu/data/amazon/productGraph/categoryFiles/"
    "ratings_Home_and_Kitchen.csv"
)


def fetch(url: str) -> bytes:
    print(f"fetching {url}")
    with urllib.request.urlopen(url) as resp:
        return resp.read()


def fetch_movielens(root: Path) -> None:
    out = root / "ml-100k"
    if (out / "u.data").exists():
        print("ml-100k already present")
        return
    blob = fetch(ML_URL)
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        for name in zf.namelist():
            if name.startswith("ml-100k/") and not name.endswith("/"):
                target = root / name
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(zf.read(name))
    print(f"wrote {out}")


def fetch_lastfm(root: Path) -> None:
    out = root / "lastfm"
    if (out / "user_artists.dat").exists():
        print("lastfm already present")
        return
    blob = fetch(LASTFM_URL)
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        (out / "user_artists.dat").write_bytes(zf.read("user_artists.dat"))
    print(f"wrote {out}")


def fetch_adult(root: Path) -> None:
    out = root / "adult"
    if (out / "adult.data").exists():
        print("adult already present")
        return
    out.mkdir(parents=True, exist_ok=True)
    for url in ADULT_URLS:
        (out / url.rsplit("/", 1)[1]).write_bytes(fetch(url))
    print(f"wrote {out}")


def fetch_amazon(root: Path) -> None:
    out = root / "amazon"
    if out.is_dir() and any(out.glob("*.csv")):
        print("amazon already present")
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / "ratings_Home_and_Kitchen.csv").write_bytes(fetch(AMAZON_URL))
    print(f"wrote {out}")


def main() -> int:
    if len(sys.argv) > 1:
        root = Path(sys.argv[1])
    else:
        root = Path(os.environ.get("PRIVREC_DATA", Path(__file__).parent.parent / "tests" / "data"))
    root.mkdir(parents=True, exist_ok=True)
    failures = []
    for fn in (fetch_movielens, fetch_lastfm, fetch_adult, fetch_amazon):
        try:
            fn(root)
        except Exception as e:  # keep fetching the rest
            failures.append((fn.__name__, e))
            print(f"{fn.__name__} failed: {e}", file=sys.stderr)
    if failures:
        print(f"{len(failures)} download(s) failed", file=sys.stderr)
        return 1
    print(f"all corpora under {root}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
