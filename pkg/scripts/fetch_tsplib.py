"""Download TSPLIB instances needed by the test suite into tests/data/.

Requires outbound network access. Tries a list of public mirrors for each
instance, gunzips when needed, and writes a ``<name>.opt`` sidecar with the
published optimal tour length.

Usage: python scripts/fetch_tsplib.py [name ...]   (default: a280)
"""

from __future__ import annotations

import gzip
import pathlib
import sys
import urllib.request

DATA_DIR = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"

# published optimal tour lengths (TSPLIB's official solutions list)
OPTIMA = {
    "a280": 2579,
    "eil51": 426,
    "berlin52": 7542,
    "kroA100": 21282,
    "rd100": 7910,
}

MIRRORS = [
    "http://comopt.ifi.uni-heidelberg.de/software/TSPLIB95/tsp/{name}.tsp.gz",
    "https://raw.githubusercontent.com/mastqe/tsplib/master/{name}.tsp",
    "https://raw.githubusercontent.com/pdrozdowski/TSPLib.Net/master/TSPLIB95/tsp/{name}.tsp",
]


def fetch(name: str) -> None:
    if name not in OPTIMA:
        raise SystemExit(f"unknown instance {name!r}; add its published optimum first")
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    target = DATA_DIR / f"{name}.tsp"
    last_error: Exception | None = None
    for mirror in MIRRORS:
        url = mirror.format(name=name)
        try:
            with urllib.request.urlopen(url, timeout=30) as resp:
                blob = resp.read()
            if url.endswith(".gz"):
                blob = gzip.decompress(blob)
            text = blob.decode("utf-8", errors="replace")
            if "NODE_COORD_SECTION" not in text:
                raise ValueError(f"{url} did not return a coordinate instance")
            target.write_text(text)
            (DATA_DIR / f"{name}.opt").write_text(f"{OPTIMA[name]}\n")
            print(f"fetched {name} from {url} -> {target}")
            return
        except Exception as exc:  # try the next mirror
            last_error = exc
            print(f"  {url}: {exc}")
    raise SystemExit(f"could not fetch {name}: {last_error}")


if __name__ == "__main__":
    names = sys.argv[1:] or ["a280"]
    for name in names:
        fetch(name)
