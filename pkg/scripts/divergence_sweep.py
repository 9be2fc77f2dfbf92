#!/usr/bin/env python3
"""Proxy A-distance between an angle-0 domain and an angle-theta domain, for a range of theta."""
import argparse

import numpy as np

from mixdg.datadomains import ShiftFamilySpec, generate_synthetic
from mixdg.divergediag import proxy_a_distance


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--angles", type=float, nargs="+", default=[0, 10, 30, 60, 90])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args(argv)
    for theta in args.angles:
        vals = []
        for seed in range(args.seeds):
            src = generate_synthetic(ShiftFamilySpec(source_angles=(0, theta), target_angle=theta + 30,
                                                     seed=seed))[0]
            vals.append(proxy_a_distance(src.domain(0).features, src.domain(1).features, seed=seed))
        print(f"theta={theta:5.1f}  median proxy A-distance {np.median(vals):.3f}  (min {min(vals):.3f}, "
              f"max {max(vals):.3f})")


if __name__ == "__main__":
    main()
