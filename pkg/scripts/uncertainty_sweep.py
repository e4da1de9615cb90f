"""Empirical check of the uncertainty bounds over randomized rounding draws.

Prints, per (h, Lambda), the worst ratio measured/bound for dA, dB, dL and
dA_c.  Ratios above one would falsify the bounds.
"""
import argparse

import numpy as np

from encobs.matrix_time import discretize_zoh
from encobs.plant import STUDY_PARAMS, dc_motor
from encobs.stability.bounds import Inadmissible, fro, realized_uncertainty, uncertainty_bounds


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--draws", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cr = dc_motor(STUDY_PARAMS)
    rng = np.random.default_rng(args.seed)
    print(f"{'h':>6} {'Lambda':>8}   dA     dB     dL     dAc")
    for h in (0.01, 0.03, 0.05, 0.07):
        d = discretize_zoh(cr, h)
        for lam in (1e3, 1e4, 1e5):
            try:
                b = uncertainty_bounds(cr, h, lam, realized=False)
            except Inadmissible as exc:
                print(f"{h:6.3f} {lam:8.0e}   inadmissible: {exc}")
                continue
            worst = np.zeros(4)
            for _ in range(args.draws):
                def pert(M, theta):
                    return M + rng.uniform(-0.5, 0.5, M.shape) / theta
                ru = realized_uncertainty(cr, h, pert(d.A_d, lam * lam), pert(d.B_d, lam),
                                          pert(d.L_d, lam), pert(cr.C, lam), pert(cr.K, lam))
                r = [fro(ru.dA) / b.delta_A, fro(ru.dB) / b.delta_B, fro(ru.dL) / b.delta_L,
                     fro(ru.dAc) / b.phi]
                worst = np.maximum(worst, r)
            print(f"{h:6.3f} {lam:8.0e}   " + "  ".join(f"{w:.3f}" for w in worst))


if __name__ == "__main__":
    main()
