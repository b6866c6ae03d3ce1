"""Second-order convergence of the first stability eigenvalue under refinement."""

import argparse

from imcf_gap.neck_builder import AxisymSurface, stability_first_eigen


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--coeffs", type=float, nargs="+", default=[0.0, 0.1, -0.05])
    ap.add_argument("--cells", type=int, nargs="+", default=[50, 100, 200, 400, 800, 1600])
    args = ap.parse_args(argv)
    print("n_cells,mu1,difference,ratio")
    prev, prev_diff = None, None
    for n in args.cells:
        mu, _ = stability_first_eigen(AxisymSurface.perturbed(args.coeffs, 1.0, n))
        diff = None if prev is None else prev - mu
        ratio = "" if diff is None or prev_diff is None else f"{prev_diff / diff:.3f}"
        print(f"{n},{mu:.12e},{'' if diff is None else f'{diff:.3e}'},{ratio}")
        prev, prev_diff = mu, diff


if __name__ == "__main__":
    main()
