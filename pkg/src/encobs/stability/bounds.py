"""Quantization-induced uncertainty bounds and disturbance bounds.

All matrix norms are Frobenius norms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..matrix_time import (
    ContinuousRealization,
    MatrixFunctionError,
    discretize_zoh,
    exp_and_gramian,
    expm,
    virtual_realization,
)
from ..quantizer import GainSchedule, quantize

__all__ = [
    "Inadmissible",
    "UncertaintyBounds",
    "RealizedUncertainty",
    "uncertainty_bounds",
    "quantized_matrices",
    "realized_uncertainty",
    "lambda_condition_lhs",
    "schedule_admissible",
    "ScheduleVerdict",
    "disturbance_energy_bound",
    "DisturbanceBound",
    "eta_bound",
]


class Inadmissible(ValueError):
    """The (h, Lambda) pair violates a precondition of the uncertainty bounds."""


def fro(M) -> float:
    return float(np.linalg.norm(np.atleast_2d(M), "fro"))


@dataclass(frozen=True)
class UncertaintyBounds:
    h: float
    lam: float
    gamma_A: float
    gamma_B: float
    gamma_L: float
    delta_A: float
    delta_B: float
    delta_L: float
    alpha: float
    beta: float
    phi: float
    M_U: float | None = None

    @property
    def lhs(self) -> float:
        """2 delta_A^2 + phi^2, compared against the certificate's gamma."""
        return 2.0 * self.delta_A**2 + self.phi**2


@dataclass(frozen=True)
class RealizedUncertainty:
    """Uncertainty terms of one concrete quantized realization."""

    dA: np.ndarray
    dB: np.ndarray
    dL: np.ndarray
    K_tilde: np.ndarray
    C_tilde: np.ndarray
    D: np.ndarray
    dAcl: np.ndarray
    dAc: np.ndarray
    M: np.ndarray


def _static_terms(cr: ContinuousRealization, h: float):
    A = cr.A
    E_neg = expm(-A * h)
    _, G = exp_and_gramian(A, h)
    return fro(E_neg), fro(np.linalg.inv(G)), fro(A)


def _bounds_from_gammas(cr, h, lam, gamma_A, gamma_B, gamma_L, M_U=None):
    n, m, r = cr.n, cr.m, cr.r
    e_norm, alpha, a_norm = _static_terms(cr, h)
    rho = e_norm * gamma_A
    if not rho < 1:
        raise Inadmissible(f"||exp(-Ah)|| gamma_A = {rho:.3g} >= 1")
    delta_A = rho / (h * (1.0 - rho))
    if not delta_A < 1:
        raise Inadmissible(f"delta_A = {delta_A:.3g} >= 1")
    with np.errstate(over="ignore"):
        beta = math.exp(min(a_norm * h, 700.0)) * h * h * delta_A / (1.0 - delta_A)
    if not alpha * beta < 1:
        raise Inadmissible(f"alpha*beta = {alpha * beta:.3g} >= 1")
    scale = alpha / (1.0 - alpha * beta)
    delta_B = scale * (gamma_B + beta * fro(cr.B))
    delta_L = scale * (gamma_L + beta * fro(cr.L))
    c_q = math.sqrt(n * r) / (2.0 * lam)
    k_q = math.sqrt(m * n) / (2.0 * lam)
    phi = (2.0 * (fro(cr.C) + c_q) * delta_L + c_q * fro(cr.L)
           + 2.0 * (fro(cr.K) + k_q) * delta_B + k_q * fro(cr.B))
    return UncertaintyBounds(h=float(h), lam=float(lam), gamma_A=gamma_A, gamma_B=gamma_B,
                             gamma_L=gamma_L, delta_A=delta_A, delta_B=delta_B,
                             delta_L=delta_L, alpha=alpha, beta=beta, phi=phi, M_U=M_U)


def quantized_matrices(cr: ContinuousRealization, h: float, lam: float) -> dict:
    """Controller matrices as the encrypted controller sees them after decoding."""
    d = discretize_zoh(cr, h)
    return {
        "A_d": quantize(d.A_d, lam * lam),
        "B_d": quantize(d.B_d, lam),
        "L_d": quantize(d.L_d, lam),
        "C": quantize(cr.C, lam),
        "K": quantize(cr.K, lam),
    }


def realized_uncertainty(cr: ContinuousRealization, h: float, A_d_bar, B_d_bar, L_d_bar,
                         C_bar, K_bar) -> RealizedUncertainty:
    """Delta terms of the closed loop for given quantized matrices.

    Raises Inadmissible when the virtual realization does not exist.
    """
    try:
        v = virtual_realization(A_d_bar, B_d_bar, L_d_bar, h)
    except MatrixFunctionError as exc:
        raise Inadmissible(f"virtual realization failed: {exc}") from exc
    A, B, L, C, K = cr.A, cr.B, cr.L, cr.C, cr.K
    dA = v.A_v - A
    dB = v.B_v - B
    dL = v.L_v - L
    Kt = np.atleast_2d(K_bar) - K
    Ct = np.atleast_2d(C_bar) - C
    n = cr.n
    Z = np.zeros((n, n))
    dAcl = np.block([[Z, -dA], [Z, dA]])
    X = (L + dL) @ Ct - dB @ (K + Kt)
    dAc = np.block([[-dL @ C, X], [dL @ C, dB @ (K + Kt) + B @ Kt - (L + dL) @ Ct]])
    M11 = -dB @ (K + Kt) + (L + dL) @ (C + Ct) - v.D
    M21 = (B + dB) @ (K + Kt) - (L + dL) @ (C + Ct) + v.D
    M12 = -(L + dL)
    M22 = L + dL
    M = np.block([[M11, M12], [M21, M22]])
    return RealizedUncertainty(dA=dA, dB=dB, dL=dL, K_tilde=Kt, C_tilde=Ct, D=v.D,
                               dAcl=dAcl, dAc=dAc, M=M)


def uncertainty_bounds(cr: ContinuousRealization, h: float, lam: float,
                       realized: bool = True) -> UncertaintyBounds:
    """delta_A, delta_B, delta_L, phi for static gain ``lam`` (plus M_U if ``realized``)."""
    if not h > 0 or not lam > 0:
        raise ValueError("h and Lambda must be positive")
    n, m, r = cr.n, cr.m, cr.r
    gamma_A = n / (2.0 * lam * lam)
    gamma_B = math.sqrt(m * n) / (2.0 * lam)
    gamma_L = math.sqrt(n * r) / (2.0 * lam)
    M_U = None
    if realized:
        q = quantized_matrices(cr, h, lam)
        ru = realized_uncertainty(cr, h, q["A_d"], q["B_d"], q["L_d"], q["C"], q["K"])
        M_U = fro(ru.M)
    return _bounds_from_gammas(cr, h, lam, gamma_A, gamma_B, gamma_L, M_U)


def lambda_condition_lhs(cr: ContinuousRealization, h: float, lam: float) -> float:
    """2 delta_A^2 + phi^2 at (h, Lambda); +inf when inadmissible."""
    try:
        return uncertainty_bounds(cr, h, lam, realized=False).lhs
    except Inadmissible:
        return math.inf


@dataclass(frozen=True)
class ScheduleVerdict:
    admissible: bool
    partial_sum: float
    terms: int
    reason: str

    def __bool__(self) -> bool:
        return self.admissible


def schedule_admissible(schedule: GainSchedule, terms: int = 10**6) -> ScheduleVerdict:
    """Is sum_k 1/Lambda_k^2 finite?

    Power schedules get the analytic verdict (p > 1/2); fixed schedules always
    diverge; explicit lists are finite and therefore summable, reported with
    their partial sum.  A cap turns any schedule into an eventually constant
    (divergent) one.
    """
    n_terms = terms if schedule.kind != "explicit" else len(schedule.values)
    ks = np.arange(n_terms)
    if schedule.kind == "power":
        gains = np.where(ks == 0, 1.0, ks.astype(float) ** schedule.p)
        if schedule.cap is not None:
            gains = np.minimum(gains, schedule.cap)
    elif schedule.kind == "fixed":
        gains = np.full(n_terms, schedule(0))
    else:
        gains = np.array([schedule(k) for k in ks])
    partial = float(np.sum(1.0 / gains**2))
    if schedule.cap is not None and schedule.kind != "explicit":
        return ScheduleVerdict(False, partial, n_terms, "capped gain is eventually constant")
    if schedule.kind == "power":
        ok = schedule.p > 0.5
        return ScheduleVerdict(ok, partial, n_terms,
                               f"p-series with exponent 2p = {2 * schedule.p:g}")
    if schedule.kind == "fixed":
        return ScheduleVerdict(False, partial, n_terms, "constant gain: harmonic divergence")
    return ScheduleVerdict(True, partial, n_terms, "finite explicit list")


def eta_bound(M_U: float, n: int, r: int, lam: float, lam_k: float) -> float:
    """Per-sample bound on ||eta(t_k)||."""
    return M_U * (math.sqrt(n) / 2.0 + math.sqrt(r) / (2.0 * lam)) / lam_k


@dataclass(frozen=True)
class DisturbanceBound:
    energy: float
    per_sample: np.ndarray
    partial_sum: float


def disturbance_energy_bound(cr: ContinuousRealization, bounds: UncertaintyBounds, h: float,
                             schedule: GainSchedule, horizon: float) -> DisturbanceBound:
    """Energy bound h M_U^2 (sqrt(n)/2 + sqrt(r)/(2 Lambda))^2 sum 1/Lambda_k^2 over the horizon."""
    if bounds.M_U is None:
        raise ValueError("bounds were computed without M_U")
    steps = int(round(horizon / h))
    gains = np.array([schedule(k) for k in range(steps)])
    per = bounds.M_U * (math.sqrt(cr.n) / 2 + math.sqrt(cr.r) / (2 * bounds.lam)) / gains
    s = float(np.sum(1.0 / gains**2))
    energy = h * bounds.M_U**2 * (math.sqrt(cr.n) / 2 + math.sqrt(cr.r) / (2 * bounds.lam))**2 * s
    return DisturbanceBound(energy=energy, per_sample=per, partial_sum=s)
