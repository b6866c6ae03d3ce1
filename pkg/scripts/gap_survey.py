"""Distribution of lambda * A0 / pi over random PSC dumbbells and junction trees.

lambda is the swept scalar-curvature floor at t = log 2, the value the
gap-consistency check feeds to the certificate. Compare the column against
c/pi = 5.437 and 8.
"""

import argparse
import math
import warnings

import numpy as np

from imcf_gap.generators import psc_dumbbell, random_junction_tree
from imcf_gap.imcf_core import solve_weak_imcf
from imcf_gap.monotonicity_audit import GAP_CONSTANT, LOG2
from imcf_gap.tree_flow import solve_tree_flow


def floor_at_log2(trace):
    k = min(int(np.searchsorted(trace.t, LOG2)), len(trace.t) - 1)
    return float(trace.min_R[k])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=50)
    args = ap.parse_args(argv)
    print("kind,seed,n_ends,t_end,lambda_A0_over_pi,below_c")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for seed in range(args.samples):
            d = psc_dumbbell(seed, n=1024)
            sol = solve_weak_imcf(d.profile, d.r_start)
            tr = sol.trace()
            x = floor_at_log2(tr) * sol.A0 / math.pi
            print(f"dumbbell,{seed},2,{tr.t[-1]:.4f},{x:.4f},{x * math.pi <= GAP_CONSTANT}")
        for seed in range(args.samples):
            k = 2 + seed % 3
            res = solve_tree_flow(random_junction_tree(seed, k=k, balanced=seed % 2 == 0), 10.0)
            x = floor_at_log2(res.trace) * res.A0 / math.pi
            print(f"tree,{seed},{k + 1},{res.t_end:.4f},{x:.4f},{x * math.pi <= GAP_CONSTANT}")


if __name__ == "__main__":
    main()
