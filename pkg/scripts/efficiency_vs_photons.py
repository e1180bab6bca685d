"""Monte Carlo MLE efficiency for the height-only cliff as the photon number grows."""

import argparse
import csv
import math
import sys

from phasecrb import CliffParameters, cliff_model, gaussian_profile, monte_carlo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--photons", type=float, nargs="+", default=[1e3, 1e4, 1e5])
    ap.add_argument("--trials", type=int, default=400)
    ap.add_argument("--k-dh", type=float, default=0.05, help="true height change times k")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    p = CliffParameters.from_optics(633e-9, 633e-9 / 4, beta=math.radians(80.0))
    model, beam = cliff_model(p, ("h",)), gaussian_profile(1.4e-6)
    wr = csv.writer(sys.stdout, lineterminator="\n")
    wr.writerow(["n_photons", "efficiency", "sample_var [m^2]", "crb [m^2]", "path"])
    for n in args.photons:
        rep = monte_carlo(model, beam, None, [args.k_dh / p.k], int(n), args.trials,
                          seed=args.seed)
        wr.writerow([int(n), f"{rep.efficiency[0]:.4f}", f"{rep.sample_covariance[0, 0]:.4e}",
                     f"{rep.crb[0, 0]:.4e}", rep.path])


if __name__ == "__main__":
    main()
