#!/usr/bin/env python3
"""Fetch the MovieLens 100k ratings into ``data/ml-100k/u.data`` (tab separated).

Tries the GroupLens archive first. If that host is unreachable, falls back to
the copy shipped inside the RecBole wheel on PyPI (``dataset_example/ml-100k``).
The data is not redistributed with this repository; see the GroupLens license.
"""

import argparse
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
RECBOLE_MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def from_grouplens(timeout=30):
    with urllib.request.urlopen(GROUPLENS_URL, timeout=timeout) as resp:
        blob = resp.read()
    with zipfile.ZipFile(io.BytesIO(blob)) as z:
        return z.read("ml-100k/u.data").decode()


def from_recbole():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "recbole==1.2.1", "--no-deps",
                        "-q", "-d", tmp], check=True)
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            text = z.read(RECBOLE_MEMBER).decode()
    # drop RecBole's typed header row
    return "\n".join(text.splitlines()[1:]) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dest", default=Path(__file__).resolve().parent.parent / "data" / "ml-100k")
    args = ap.parse_args()
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    target = dest / "u.data"
    if target.exists():
        print(f"{target} already present")
        return 0
    try:
        text = from_grouplens()
    except Exception as e:  # noqa: BLE001 - any network failure falls through
        print(f"GroupLens download failed ({e}); trying the RecBole wheel", file=sys.stderr)
        text = from_recbole()
    rows = [line for line in text.splitlines() if line.strip()]
    if len(rows) != 100000:
        raise SystemExit(f"expected 100000 ratings, got {len(rows)}")
    target.write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {len(rows)} ratings to {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
