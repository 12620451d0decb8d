"""Download the binary benchmark files into data/ (needs network access).

The library itself never downloads; point ``sgdconv benchmark --data`` at
the files this script leaves behind.
"""
import argparse
import bz2
import shutil
import urllib.request
from pathlib import Path

SOURCES = {
    "covertype": "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass/covtype.bz2",
    "mnist": "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass/mnist.bz2",
}


def fetch(name: str, dest: Path) -> Path:
    target = dest / f"{name}.libsvm"
    if target.exists():
        return target
    packed = dest / f"{name}.bz2"
    with urllib.request.urlopen(SOURCES[name], timeout=60) as resp, open(packed, "wb") as fh:
        shutil.copyfileobj(resp, fh)
    with bz2.open(packed) as src, open(target, "wb") as fh:
        shutil.copyfileobj(src, fh)
    packed.unlink()
    return target


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", default=sorted(SOURCES), choices=sorted(SOURCES))
    ap.add_argument("--dest", default="data")
    args = ap.parse_args()
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    for name in args.names:
        print(fetch(name, dest))


if __name__ == "__main__":
    main()
