"""Stability certificates: solving, checking, storing, and the minimal static gain."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..matrix_time import ContinuousRealization
from .bounds import lambda_condition_lhs
from .lmi import CertificateVars, LmiProblem, VarLayout, affine_basis, assemble_lmis
from .solver import LmiSystem, SolveResult, SolverOptions, maximize_margin

__all__ = [
    "StabilityCertificate",
    "MarginReport",
    "FeasibilityResult",
    "solve_feasibility",
    "check_certificate",
    "maximize_gamma",
    "GammaSearch",
    "min_quantization_gain",
    "NoAdmissibleGain",
    "write_certificate",
    "read_certificate",
    "CertificateFormatError",
]

FORMAT_TAG = "encobs-certificate 1"


class NoAdmissibleGain(ValueError):
    pass


class CertificateFormatError(ValueError):
    pass


@dataclass
class StabilityCertificate:
    vars: CertificateVars
    h: float
    margins: dict = field(default_factory=dict)
    plant: str = ""

    @property
    def n(self) -> int:
        return self.vars.P.shape[0] // 2

    @property
    def gamma(self) -> float:
        return self.vars.gamma


@dataclass
class MarginReport:
    """Smallest eigenvalue of every condition, oriented so that positive is feasible."""

    margins: dict

    @property
    def min_margin(self) -> float:
        return min(self.margins.values())

    def feasible(self, tol: float = 0.0) -> bool:
        return self.min_margin > tol

    def violations(self, tol: float = 0.0) -> list[str]:
        return [k for k, v in self.margins.items() if not v > tol]


def check_certificate(cert: StabilityCertificate | CertificateVars, problem: LmiProblem,
                      h: float) -> MarginReport:
    """Re-assemble the four conditions at ``cert`` and report eigenvalue margins."""
    v = cert.vars if isinstance(cert, StabilityCertificate) else cert
    blocks = assemble_lmis(problem, h, v)

    def lmin(M):
        return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])

    margins = {
        "c28": lmin(blocks.c28),
        "c29": lmin(-blocks.c29),
        "c30": lmin(-blocks.c30),
        "c31": lmin(-blocks.c31),
        "P": lmin(v.P),
        "R": lmin(v.R),
        "Psi": lmin(v.Psi),
        "eps1": v.eps1,
        "eps2": v.eps2,
        "mult1": v.mult1,
        "mult2": v.mult2,
    }
    return MarginReport(margins)


@lru_cache(maxsize=16)
def _basis(problem_key: tuple, h: float):
    A_cl, A_c, n = problem_key
    problem = LmiProblem(A_cl=np.array(A_cl), A_c=np.array(A_c), n=n)
    return affine_basis(problem, h)


def _problem_key(problem: LmiProblem) -> tuple:
    return (tuple(map(tuple, problem.A_cl)), tuple(map(tuple, problem.A_c)), problem.n)


def _gamma_blocks(layout: VarLayout, gamma: float) -> dict[str, np.ndarray]:
    """eps1 - 2 gamma mult1 >= 0 and eps2 - 6 gamma mult2 >= 0 as 1x1 blocks."""
    N = layout.size
    out = {}
    for name, (e, mu, c) in {"gamma1": ("eps1", "mult1", 2.0),
                             "gamma2": ("eps2", "mult2", 6.0)}.items():
        B = np.zeros((N, 1, 1))
        B[layout.slices[e].start] = 1.0
        B[layout.slices[mu].start] = -c * gamma
        out[name] = B
    return out


@dataclass
class FeasibilityResult:
    status: str
    certificate: StabilityCertificate | None
    solve: SolveResult
    report: MarginReport | None

    @property
    def feasible(self) -> bool:
        return self.certificate is not None


def solve_feasibility(problem: LmiProblem, h: float, options: SolverOptions | None = None,
                      gamma: float | None = None) -> FeasibilityResult:
    """Search for a strictly feasible certificate at sampling interval ``h``.

    With ``gamma`` the scalars are additionally constrained to
    min{eps1/(2 mult1), eps2/(6 mult2)} >= gamma.  A candidate is returned only
    if the independent re-assembly in ``check_certificate`` confirms every
    margin above the solver tolerance.
    """
    if not h > 0:
        raise ValueError("sampling interval must be positive")
    opts = options or SolverOptions()
    layout = VarLayout(problem.n)
    blocks = dict(_basis(_problem_key(problem), float(h)))
    if gamma is not None:
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        blocks.update(_gamma_blocks(layout, gamma))
    res = maximize_margin(LmiSystem(blocks), opts)
    if res.status != "feasible":
        return FeasibilityResult(res.status, None, res, None)
    v = layout.unpack(res.x)
    report = check_certificate(v, problem, h)
    if not report.feasible(0.5 * opts.tol):
        return FeasibilityResult("numerical", None, res, report)
    cert = StabilityCertificate(vars=v, h=float(h), margins=dict(report.margins))
    return FeasibilityResult("feasible", cert, res, report)


@dataclass
class GammaSearch:
    certificate: StabilityCertificate | None
    gamma_feasible: float
    gamma_infeasible: float
    trials: list           # (gamma, status)


def maximize_gamma(problem: LmiProblem, h: float, ratio: float = 1.25,
                   options: SolverOptions | None = None,
                   gamma_ceiling: float = 1e3) -> GammaSearch:
    """Largest gamma (to within ``ratio``) for which the conditions stay feasible.

    Geometric bracketing from the plain certificate's own gamma, then
    bisection in log scale.  The returned certificate is re-centered with the
    margin-maximizing solver at the best feasible gamma.
    """
    base = options or SolverOptions()
    quick = SolverOptions(**{**base.__dict__, "mode": "feasibility"})
    first = solve_feasibility(problem, h, quick)
    trials = []
    if not first.feasible:
        return GammaSearch(None, 0.0, 0.0, [(0.0, first.status)])
    lo = first.certificate.gamma
    trials.append((lo, "feasible"))
    hi = None
    g = lo
    while g < gamma_ceiling:
        g *= 10.0
        r = solve_feasibility(problem, h, quick, gamma=g)
        trials.append((g, r.status))
        if r.feasible:
            lo = max(g, r.certificate.gamma)
        else:
            hi = g
            break
    if hi is None:
        hi = math.inf
    while math.isfinite(hi) and hi / lo > ratio:
        g = math.sqrt(lo * hi)
        r = solve_feasibility(problem, h, quick, gamma=g)
        trials.append((g, r.status))
        if r.feasible:
            lo = max(g, r.certificate.gamma)
        else:
            hi = g
    final = solve_feasibility(problem, h, SolverOptions(**{**base.__dict__, "mode": "maximize"}),
                              gamma=lo)
    cert = final.certificate
    if cert is None:
        # fall back to the early-exit certificate at the last feasible gamma
        r = solve_feasibility(problem, h, quick, gamma=lo)
        cert = r.certificate
    return GammaSearch(cert, lo, hi, trials)


def min_quantization_gain(cert: StabilityCertificate, cr: ContinuousRealization, h: float,
                          lam_ceiling: float = 1e10, digits: int = 3) -> float:
    """Smallest static gain Lambda with 2 delta_A^2 + phi^2 <= gamma(cert).

    The left side decreases in Lambda, so a log-scale bisection applies.  The
    result is rounded up to ``digits`` significant digits and re-verified.
    """
    gamma = cert.gamma
    if not gamma > 0:
        raise NoAdmissibleGain("certificate gamma must be positive")

    def ok(lam):
        return lambda_condition_lhs(cr, h, lam) <= gamma

    hi = 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > lam_ceiling:
            raise NoAdmissibleGain(f"no admissible Lambda below {lam_ceiling:g} at h={h:g}")
    lo = hi / 2.0
    if hi == 1.0:
        return 1.0
    while (hi - lo) / hi > 10.0 ** (-digits - 2):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    exp = math.floor(math.log10(hi)) - (digits - 1)
    lam = math.ceil(hi / 10.0**exp) * 10.0**exp
    lam = float(f"{lam:.{digits - 1}e}")
    if not ok(lam):
        raise NoAdmissibleGain("rounded gain failed re-verification")
    return lam


# -- text format ----------------------------------------------------------------

def write_certificate(cert: StabilityCertificate, path) -> Path:
    """Plain text: header, scalars, then each matrix row-major at full precision."""
    path = Path(path)
    v = cert.vars
    lines = [FORMAT_TAG, f"n {cert.n}", f"h {cert.h!r}", f"plant {cert.plant or '-'}"]
    d = v.as_dict()
    for name in ("eps1", "eps2", "mult1", "mult2"):
        lines.append(f"scalar {name} {float(d[name])!r}")
    for name, val in d.items():
        if np.ndim(val) == 0:
            continue
        M = np.asarray(val, dtype=float)
        lines.append(f"matrix {name} {M.shape[0]} {M.shape[1]}")
        for row in M:
            lines.append(" ".join(repr(float(a)) for a in row))
    for name, val in cert.margins.items():
        lines.append(f"margin {name} {float(val)!r}")
    lines.append(f"gamma {cert.gamma!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_certificate(path) -> StabilityCertificate:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != FORMAT_TAG:
        raise CertificateFormatError("missing certificate header")
    values: dict = {}
    margins: dict = {}
    h = None
    plant = ""
    i = 1
    try:
        while i < len(text):
            parts = text[i].split()
            i += 1
            if not parts:
                continue
            key = parts[0]
            if key == "n":
                n = int(parts[1])
            elif key == "h":
                h = float(parts[1])
            elif key == "plant":
                plant = "" if parts[1] == "-" else parts[1]
            elif key == "scalar":
                values[parts[1]] = float(parts[2])
            elif key == "matrix":
                name, r, c = parts[1], int(parts[2]), int(parts[3])
                rows = [list(map(float, text[i + j].split())) for j in range(r)]
                i += r
                M = np.array(rows, dtype=float)
                if M.shape != (r, c):
                    raise CertificateFormatError(f"matrix {name} has wrong shape")
                values[name] = M
            elif key == "margin":
                margins[parts[1]] = float(parts[2])
            elif key == "gamma":
                pass
            else:
                raise CertificateFormatError(f"unknown record {key!r}")
    except (IndexError, ValueError) as exc:
        raise CertificateFormatError(f"malformed certificate near line {i}: {exc}") from exc
    if h is None:
        raise CertificateFormatError("missing sampling interval")
    try:
        v = CertificateVars(**values)
    except TypeError as exc:
        raise CertificateFormatError(f"incomplete certificate: {exc}") from exc
    layout = VarLayout(n)
    for name, shape in layout.shapes.items():
        if shape and np.shape(values[name]) != shape:
            raise CertificateFormatError(f"{name} has shape {np.shape(values[name])}, expected {shape}")
    return StabilityCertificate(vars=v, h=h, margins=margins, plant=plant)
