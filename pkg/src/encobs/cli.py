"""Command line entry point.

    encobs run [CONFIG] [--preset NAME] [--out DIR] [--seed N] [--jobs N]
    encobs replay TRANSCRIPT [--seed N] [--keyless]
    encobs check-cert CERTIFICATE --plant dc_motor --h H

Exit codes: 0 success, 1 configuration error, 2 infeasible or inadmissible,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3


def _run(args) -> int:
    from .experiments.config import load_config
    from .experiments.runner import run

    overrides = {} if args.seed is None else {"seed": args.seed}
    cfg = load_config(args.config, preset=args.preset, overrides=overrides)
    report = run(cfg, out_dir=args.out, jobs=args.jobs)
    print(f"{cfg.name}: {len(report.rows)} cells -> {report.out_dir}")
    for row in report.rows:
        print("  " + ", ".join(f"{k}={v}" for k, v in row.items()
                               if k not in ("trace", "transcript", "certificate")))
    return EXIT_OK


def _replay(args) -> int:
    from .experiments.replay import replay

    verdict = replay(args.transcript, seed=args.seed, rerun=not args.keyless)
    print(verdict)
    if verdict.ok:
        return EXIT_OK
    return EXIT_CONFIG if verdict.stage == "read" else EXIT_INFEASIBLE


def _check_cert(args) -> int:
    from .experiments.plants import resolve_plant
    from .stability.certificate import (
        NoAdmissibleGain,
        check_certificate,
        min_quantization_gain,
        read_certificate,
    )
    from .stability.lmi import LmiProblem

    cert = read_certificate(args.certificate)
    cr = resolve_plant(args.plant)
    problem = LmiProblem.from_realization(cr)
    report = check_certificate(cert, problem, args.h)
    for name, val in report.margins.items():
        print(f"  {name:6s} {val: .6e}")
    if abs(cert.h - args.h) > 1e-12:
        print(f"note: certificate was computed for h={cert.h:g}")
    if not report.feasible(0.0):
        print(f"INFEASIBLE: violated {', '.join(report.violations())}")
        return EXIT_INFEASIBLE
    print(f"FEASIBLE: min margin {report.min_margin:.3e}, gamma {cert.gamma:.6g}")
    try:
        print(f"minimal static gain: {min_quantization_gain(cert, cr, args.h):.3g}")
    except NoAdmissibleGain as exc:
        print(f"no admissible static gain: {exc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="encobs", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config or preset")
    r.add_argument("config", nargs="?", help="YAML config (layered over --preset if both given)")
    r.add_argument("--preset", help="built-in preset name")
    r.add_argument("--out", help="output directory (default: $ENCOBS_OUT/<name>)")
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=_run)
    rp = sub.add_parser("replay", help="verify a protocol transcript")
    rp.add_argument("transcript")
    rp.add_argument("--seed", type=int, help="rerun with this seed instead of the recorded one")
    rp.add_argument("--keyless", action="store_true", help="skip the full rerun")
    rp.set_defaults(func=_replay)
    c = sub.add_parser("check-cert", help="re-check a stored stability certificate")
    c.add_argument("certificate")
    c.add_argument("--plant", default="dc_motor")
    c.add_argument("--h", type=float, required=True)
    c.set_defaults(func=_check_cert)
    return p


def main(argv=None) -> int:
    from .controller import TranscriptError
    from .crypto import CryptoError
    from .experiments.config import ConfigError
    from .experiments.plants import UnknownPlant
    from .matrix_time import MatrixFunctionError
    from .stability.bounds import Inadmissible
    from .stability.certificate import CertificateFormatError, NoAdmissibleGain

    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, UnknownPlant, CertificateFormatError, TranscriptError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Inadmissible, NoAdmissibleGain) as exc:
        print(f"inadmissible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (MatrixFunctionError, CryptoError, FloatingPointError, OverflowError,
            ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
