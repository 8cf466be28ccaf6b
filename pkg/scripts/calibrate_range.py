#!/usr/bin/env python3
"""Print the quasi-Matern range parameter matching a Matern correlation range.

Example:
    python scripts/calibrate_range.py --n1 70 --n2 70 --range 18 --variance 2
"""
import argparse

from slem import (CovParams, GridSpec, amplitude_for_variance,
                  calibrate_range_to_matern, correlation_at_lag,
                  marginal_variance, matern_correlation)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n1", type=int, required=True)
    ap.add_argument("--n2", type=int, required=True)
    ap.add_argument("--range", dest="matern_range", type=float, required=True,
                    help="Matern (nu=1) range; correlation at this lag is K_1(1)")
    ap.add_argument("--variance", type=float, default=None,
                    help="optional pixel variance; also prints the spectral amplitude")
    args = ap.parse_args()

    grid = GridSpec.unit(args.n1, args.n2)
    alpha = calibrate_range_to_matern(grid, args.matern_range)
    lag = int(round(args.matern_range))
    print(f"alpha = {alpha!r}")
    print(f"correlation at lag {lag}: {correlation_at_lag(alpha, grid, lag):.6f} "
          f"(Matern target {matern_correlation(float(lag), args.matern_range):.6f})")
    if args.variance is not None:
        amp = amplitude_for_variance(args.variance, alpha, grid)
        print(f"spectral amplitude for pixel variance {args.variance:g}: {amp!r}")
        check = marginal_variance(CovParams(amp, alpha), grid)
        print(f"implied pixel variance: {check:.12g}")


if __name__ == "__main__":
    main()
