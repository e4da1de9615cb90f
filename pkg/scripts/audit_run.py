"""Lyapunov audit of one closed-loop run against a stored certificate.

    python3 scripts/audit_run.py CERT [--lam L] [--schedule k^2] [--horizon 53]

Without --lam the minimal admissible gain of the certificate is used.
"""
import argparse

import numpy as np

from encobs.plant import STUDY_PARAMS, dc_motor, run_closed_loop
from encobs.quantizer import GainSchedule
from encobs.stability.audit import lyapunov_audit
from encobs.stability.bounds import (
    disturbance_energy_bound,
    quantized_matrices,
    realized_uncertainty,
    uncertainty_bounds,
)
from encobs.stability.certificate import min_quantization_gain, read_certificate
from encobs.stability.lmi import LmiProblem


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("certificate")
    ap.add_argument("--lam", type=float)
    ap.add_argument("--schedule", default="k^2")
    ap.add_argument("--horizon", type=float, default=53.0)
    ap.add_argument("--mode", default="encrypted", choices=("encrypted", "quantized"))
    args = ap.parse_args()
    cr = dc_motor(STUDY_PARAMS)
    cert = read_certificate(args.certificate)
    h = cert.h
    lam = args.lam or min_quantization_gain(cert, cr, h)
    schedule = GainSchedule.from_dict(args.schedule)
    q = quantized_matrices(cr, h, lam)
    ru = realized_uncertainty(cr, h, q["A_d"], q["B_d"], q["L_d"], q["C"], q["K"])
    delta0 = np.hstack([ru.dAcl, ru.dAc, np.zeros_like(ru.dAcl)])
    trace = run_closed_loop(cr, h, lam, schedule, args.mode, horizon=args.horizon)
    audit = lyapunov_audit(trace, cert, LmiProblem.from_realization(cr), delta0=delta0)
    energy = disturbance_energy_bound(cr, uncertainty_bounds(cr, h, lam), h, schedule,
                                      args.horizon).energy
    lhs, rhs = audit.cumulative_bound(energy)
    c = audit.constants
    print(f"h={h:g} Lambda={lam:.4g} schedule={schedule.label()}")
    print(f"mu1={c.mu1:.3e} mu2={c.mu2:.3e} mu3={c.mu3:.3e} mu4={c.mu4:.3e} "
          f"varsigma={c.varsigma:.3e} s={c.s:.3e}")
    print(f"dissipating intervals: {100 * audit.fraction_ok:.1f}%  violations: {len(audit.violations)}")
    print(f"int |z|^2 = {lhs:.4g}   bound = {rhs:.4g}")


if __name__ == "__main__":
    main()
