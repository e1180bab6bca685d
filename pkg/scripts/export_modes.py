"""Write the optimal mode profiles for a cliff to CSV, one file per mode."""

import argparse
import math

from phasecrb import CliffParameters, build_basis, cliff_model, gaussian_profile


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--wavelength", type=float, default=633e-9)
    ap.add_argument("--beta-deg", type=float, default=80.0)
    ap.add_argument("--w", type=float, default=1.4e-6, help="beam width [m]")
    ap.add_argument("--out", default="out/modes")
    args = ap.parse_args()

    p = CliffParameters.from_optics(args.wavelength, args.wavelength / 4,
                                    beta=math.radians(args.beta_deg))
    basis = build_basis(cliff_model(p), gaussian_profile(args.w))
    paths = basis.export_csv(args.out, y_scale=p.alpha)
    print(f"w*alpha = {args.w * p.alpha:.1f}, Gram error {basis.orthonormality_error():.1e}")
    for path in paths:
        print(path)


if __name__ == "__main__":
    main()
