"""Learning curves of ISGD^1/2 and baselines in the four SNR x dimension settings."""
import argparse
import csv
from pathlib import Path

import numpy as np

from sgdconv.harness.compare import METHODS, compare_methods
from sgdconv.harness.simulate import SimSpec
from sgdconv.parallel import default_workers


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", choices=("normal", "logistic"), nargs="+", default=["normal", "logistic"])
    ap.add_argument("--passes", type=float, default=10)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/compare")
    ap.add_argument("--workers", type=int, default=default_workers())
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "snr", "p", "method", "seed", "passes", "sq_error", "rate"])
        for model in args.model:
            for snr in (2.0, 5.0):
                for p in (10, 150):
                    spec = SimSpec(p=p, N=5000, model=model, snr=snr)
                    curves = compare_methods(spec, METHODS, args.passes, args.seeds, args.seed,
                                             workers=args.workers)
                    for r in curves.rows():
                        w.writerow([model, snr, p, r["method"], r["seed"], r["passes"], r["value"], r["rate"]])
                    summary = ", ".join(f"{m} {np.nanmedian(curves.final(m)):.3g}" for m in METHODS)
                    print(f"{model} snr={snr:g} p={p}: {summary}")


if __name__ == "__main__":
    main()
