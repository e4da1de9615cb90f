"""Empirical Lyapunov audit of a simulated trajectory against a certificate.

The functionals are evaluated directly on the stored trace:

    V(z)   = z' P z
    U(t)   = zeta' U1 zeta + 2 phi' (U2 z + U3 z_k) + phi' U4 phi,   zeta = [z; z_k]
    W(t)   = (t - t_k) z_k' F z_k + z' H z + (z - z_k)' (W1 (z - z_k) + 2 W2 z_k)
             + int_{t_k}^t zdot' R zdot
    F(t)   = V + (t - t_k) U + (t_{k+1} - t) W

with phi(t) the running mean of z over [t_k, t].  Interval integrals use the
trapezoid rule on the substep grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..plant import ClosedLoopTrace
from .certificate import StabilityCertificate
from .lmi import LmiProblem

__all__ = [
    "AuditConstants",
    "LyapunovAudit",
    "audit_constants",
    "lyapunov_audit",
    "ResidualSet",
    "residual_set",
    "first_entry",
]


@dataclass(frozen=True)
class AuditConstants:
    mu1: float
    mu2: float
    mu3: float
    mu4: float
    varsigma: float
    s: float


@dataclass
class LyapunovAudit:
    constants: AuditConstants
    V: np.ndarray               # on the grid
    U: np.ndarray               # on the grid (left limit at each interval end)
    W: np.ndarray
    F: np.ndarray
    V_k: np.ndarray             # V(z(t_k)), k = 0..K
    int_z2: np.ndarray          # per interval
    int_eta2: np.ndarray        # per interval
    dissipation: np.ndarray     # V_{k+1} - V_k + mu3 int|z|^2 - mu4 int|eta|^2
    jump: np.ndarray            # U^-_{k+1} - W^+_k
    tol: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def fraction_ok(self) -> float:
        return float(np.mean(self.dissipation <= self._slack()))

    def _slack(self) -> np.ndarray:
        return self.tol * (np.abs(self.V_k[:-1]) + np.abs(self.V_k[1:]))

    def cumulative_bound(self, energy: float) -> tuple[float, float]:
        """(int_0^T |z|^2, mu3^-1 (V_0 + mu4 energy))."""
        c = self.constants
        return float(np.sum(self.int_z2)), (self.V_k[0] + c.mu4 * energy) / c.mu3


def _upsilon_norm(cert: StabilityCertificate, problem: LmiProblem, h: float,
                  delta0: np.ndarray | None) -> float:
    """Largest spectral norm of Upsilon over an interval (affine in t, so at the ends)."""
    v = cert.vars
    S = problem.selectors()
    E1, E2, E3, Phi0, Phi4, Phi6 = (S[k] for k in ("E1", "E2", "E3", "Phi0", "Phi4", "Phi6"))
    D0 = np.zeros_like(Phi0) if delta0 is None else delta0
    at_start = 2 * v.P @ E1 + 2 * h * (v.H @ E1 + v.W1 @ (E1 - E2) + v.W2 @ E2
                                       + v.R @ (Phi0 + D0))
    at_end = 2 * v.P @ E1 + 2 * h * (Phi6.T @ v.U1 @ Phi4 + v.U2 @ E3)
    return max(np.linalg.norm(at_start, 2), np.linalg.norm(at_end, 2))


def audit_constants(cert: StabilityCertificate, problem: LmiProblem, h: float,
                    delta0: np.ndarray | None = None) -> AuditConstants:
    """mu1..mu4 with s at half of its admissible upper limit sqrt(2 lmin(Psi) / varsigma)."""
    v = cert.vars
    ev_P = np.linalg.eigvalsh(v.P)
    lmin_psi = float(np.linalg.eigvalsh(v.Psi)[0])
    lmax_R = float(np.linalg.eigvalsh(v.R)[-1])
    vs = _upsilon_norm(cert, problem, h, delta0)
    if not lmin_psi > 0 or not vs > 0:
        return AuditConstants(float(ev_P[0]), float(ev_P[-1]), -math.inf, math.inf, vs, 0.0)
    s = 0.5 * math.sqrt(2.0 * lmin_psi / vs)
    mu3 = lmin_psi - vs * s * s / 2.0
    mu4 = lmax_R + vs / (2.0 * s * s)
    return AuditConstants(float(ev_P[0]), float(ev_P[-1]), mu3, mu4, vs, s)


def _quad(M, a, b=None):
    b = a if b is None else b
    return np.einsum("ti,ij,tj->t", a, M, b)


def lyapunov_audit(trace: ClosedLoopTrace, cert: StabilityCertificate, problem: LmiProblem,
                   delta0: np.ndarray | None = None, tol: float = 1e-6) -> LyapunovAudit:
    """Evaluate V, U, W, F along ``trace`` and check the per-interval inequalities.

    ``delta0`` is the realized uncertainty block [dA_cl, dA_c, 0] (zero for the
    ideal loop).  ``tol`` is relative to V_k + V_{k+1}.
    """
    S = trace.substeps
    if S < 50:
        raise ValueError("the audit needs at least 50 substeps per sample")
    h = trace.h
    v = cert.vars
    c = audit_constants(cert, problem, h, delta0)
    z = trace.z
    zd = trace.zdot
    t = trace.t
    K = len(trace.t_k)
    V = _quad(v.P, z)
    U = np.empty_like(V)
    W = np.empty_like(V)
    F = np.empty_like(V)
    int_z2 = np.empty(K)
    int_eta2 = np.empty(K)
    jump = np.empty(K)
    nz2 = np.sum(z * z, axis=1)
    ne2 = np.sum(trace.eta_k ** 2, axis=1)
    R = v.R
    for k in range(K):
        sl = slice(k * S, (k + 1) * S + 1)
        tt = t[sl] - t[k * S]
        zz = z[sl]
        zk = np.broadcast_to(zz[0], zz.shape)
        # right end of the interval: left limit under the same held input
        zdd = zd[sl].copy()
        zdd[-1] = trace.zdot_end[k]
        steps = np.diff(tt)
        cum = np.vstack([np.zeros(zz.shape[1]), np.cumsum(0.5 * steps[:, None] * (zz[1:] + zz[:-1]), axis=0)])
        phi = np.empty_like(zz)
        phi[0] = zz[0]
        phi[1:] = cum[1:] / tt[1:, None]
        rq = _quad(R, zdd)
        int_r = np.concatenate([[0.0], np.cumsum(0.5 * steps * (rq[1:] + rq[:-1]))])
        zeta = np.hstack([zz, zk])
        u_val = _quad(v.U1, zeta) + 2 * np.einsum("ti,ti->t", phi, zz @ v.U2.T + zk @ v.U3.T) \
            + _quad(v.U4, phi)
        dz = zz - zk
        w_val = (tt * _quad(v.F, zk) + _quad(v.H, zz)
                 + np.einsum("ti,ti->t", dz, dz @ v.W1.T + 2 * zk @ v.W2.T) + int_r)
        f_val = V[sl] + tt * u_val + (h - tt) * w_val
        U[sl], W[sl], F[sl] = u_val, w_val, f_val
        int_z2[k] = float(np.sum(0.5 * steps * (nz2[sl][1:] + nz2[sl][:-1])))
        int_eta2[k] = h * ne2[k]
        jump[k] = u_val[-1] - w_val[0]
    V_k = V[::S]
    with np.errstate(invalid="ignore"):
        supply = np.where(int_eta2 > 0, c.mu4 * int_eta2, 0.0)
    diss = V_k[1:] - V_k[:-1] + c.mu3 * int_z2 - supply
    audit = LyapunovAudit(constants=c, V=V, U=U, W=W, F=F, V_k=V_k, int_z2=int_z2,
                          int_eta2=int_eta2, dissipation=diss, jump=jump, tol=tol)
    slack = audit._slack()
    if not c.mu3 > 0:
        audit.violations.append(("mu3", -1, c.mu3))
    for k in np.flatnonzero(diss > slack):
        audit.violations.append(("dissipation", int(k), float(diss[k])))
    jslack = tol * (np.abs(V_k[:-1]) + np.abs(V_k[1:]))
    for k in np.flatnonzero(jump < -jslack):
        audit.violations.append(("jump", int(k), float(jump[k])))
    return audit


@dataclass(frozen=True)
class ResidualSet:
    rho: float
    V_bar: float
    mu3: float
    mu4: float
    eta_bar: float
    sigma: float

    def entry_time_bound(self, V_k: float, t_k: float = 0.0) -> float:
        """Latest time by which the trajectory must have entered the set."""
        return t_k + max(V_k - self.V_bar, 0.0) / self.sigma

    def contains(self, V: float) -> bool:
        return V <= self.V_bar


def residual_set(cert: StabilityCertificate, constants: AuditConstants, eta_bar: float,
                 sigma: float) -> ResidualSet:
    """rho = (mu4 eta_bar^2 + sigma) / mu3 and V_bar = lambda_max(P) rho."""
    if not constants.mu3 > 0:
        raise ValueError("mu3 must be positive")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    rho = (constants.mu4 * eta_bar**2 + sigma) / constants.mu3
    V_bar = float(np.linalg.eigvalsh(cert.vars.P)[-1]) * rho
    return ResidualSet(rho=rho, V_bar=V_bar, mu3=constants.mu3, mu4=constants.mu4,
                       eta_bar=eta_bar, sigma=sigma)


def first_entry(trace: ClosedLoopTrace, cert: StabilityCertificate, region: ResidualSet
                ) -> float | None:
    """First grid time with V(z) <= V_bar, or None."""
    V = _quad(cert.vars.P, trace.z)
    idx = np.flatnonzero(V <= region.V_bar)
    return float(trace.t[idx[0]]) if idx.size else None
