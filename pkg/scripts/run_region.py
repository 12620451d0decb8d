"""Drift sign map on a 2-D slice with the empirical 95% region of stationary iterates."""
import argparse
from pathlib import Path

from sgdconv.harness.simulate import SimSpec
from sgdconv.region import GridSpec, empirical_convergence_region, map_pflug_region


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gamma", type=float, default=0.1)
    ap.add_argument("--update", choices=("explicit", "implicit"), default="implicit")
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--res", type=int, default=41)
    ap.add_argument("--half-width", type=float, default=6.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/region")
    args = ap.parse_args()

    spec = SimSpec(p=2, sigma=3.0)
    gen = spec.generator()
    c, h = gen.theta_star, args.half_width
    grid = GridSpec(0, 1, c[0] - h, c[0] + h, c[1] - h, c[1] + h, args.res)
    model = spec.loss_model
    region = empirical_convergence_region(model, gen, c, args.gamma, args.update, seed=args.seed, grid=grid)
    rmap = map_pflug_region(model, gen, grid, args.gamma, args.update, args.reps, args.seed,
                            occupancy_points=region.points)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rmap.write_csv(out / "region.csv")
    rmap.write_json(out / "region.json")
    region.write_csv(out / "overlay.csv")
    inside = region.distance(rmap.cells) <= region.radius
    print(f"radius {region.radius:.3f}; cells inside: {inside.sum()}, "
          f"non-positive inside: {sum(rmap.classes[k] != 'positive' for k in inside.nonzero()[0])}")


if __name__ == "__main__":
    main()
