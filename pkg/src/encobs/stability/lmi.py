"""Assembly of the sampled-data LMI conditions.

The closed loop is written in z = [e; chi] (dimension p = 2n) with
xi = [z(t); z(t_k); phi_k(t)] (dimension 3p).  ``assemble_lmis`` evaluates the
four conditions at a numeric candidate; because every block is linear in the
decision variables, the solver obtains the affine basis by evaluating the
same function at unit vectors (``affine_basis``).

Sign convention of the returned blocks (feasible means):

    c28  = U - E2' H E2                         >= 0
    c29  = [[Xi0 + h Xi1 + eps1 I, Y01], ...]   <= 0
    c30  = h R - mult1 I                        <= 0
    c31  = [[Xi0 + h Xi2 + eps2 I, ...], ...]   <= 0
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..matrix_time import ContinuousRealization

__all__ = [
    "LmiProblem",
    "CertificateVars",
    "VarLayout",
    "LmiBlocks",
    "assemble_lmis",
    "affine_basis",
    "he",
]


def he(M: np.ndarray) -> np.ndarray:
    return M + M.T


@dataclass(frozen=True)
class LmiProblem:
    """Nominal closed-loop matrices and the fixed selector matrices."""

    A_cl: np.ndarray     # blockdiag(A, A)
    A_c: np.ndarray      # [[-LC, 0], [LC, BK]]
    n: int

    @classmethod
    def from_realization(cls, cr: ContinuousRealization) -> "LmiProblem":
        n = cr.n
        Z = np.zeros((n, n))
        A_cl = np.block([[cr.A, Z], [Z, cr.A]])
        LC = cr.L @ cr.C
        A_c = np.block([[-LC, Z], [LC, cr.B @ cr.K]])
        return cls(A_cl=A_cl, A_c=A_c, n=n)

    @property
    def p(self) -> int:
        return 2 * self.n

    def selectors(self) -> dict[str, np.ndarray]:
        p = self.p
        I = np.eye(p)
        Z = np.zeros((p, p))
        E1 = np.hstack([I, Z, Z])
        E2 = np.hstack([Z, I, Z])
        E3 = np.hstack([Z, Z, I])
        Phi0 = np.hstack([self.A_cl, self.A_c, Z])
        return {
            "E1": E1,
            "E2": E2,
            "E3": E3,
            "Phi0": Phi0,
            "Phi1": E1 - E2,
            "Phi2": E1 + E2 - 2 * E3,
            "Phi3": np.hstack([Z, self.A_c, self.A_cl]),
            "Phi4": np.vstack([E1, E2]),
            "Phi5": np.vstack([Phi0, np.zeros((p, 3 * p))]),
            "Phi6": np.vstack([I, Z]),
        }


@dataclass
class CertificateVars:
    """Decision variables of the LMI conditions.

    ``eps1``/``eps2`` are the margins added on the diagonal of the second and
    fourth conditions; ``mult1``/``mult2`` are the S-procedure multipliers
    that appear as ``-mult I`` blocks.
    """

    P: np.ndarray
    R: np.ndarray
    U1: np.ndarray
    F: np.ndarray
    W1: np.ndarray
    H: np.ndarray
    U4: np.ndarray
    U2: np.ndarray
    U3: np.ndarray
    W2: np.ndarray
    Psi: np.ndarray
    Q: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    eps1: float
    eps2: float
    mult1: float
    mult2: float

    @classmethod
    def zeros(cls, n: int) -> "CertificateVars":
        return VarLayout(n).unpack(np.zeros(VarLayout(n).size))

    def scaled(self, s: float) -> "CertificateVars":
        return CertificateVars(**{f.name: getattr(self, f.name) * s for f in fields(self)})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def gamma(self) -> float:
        """min{eps1/(2 mult1), eps2/(6 mult2)}: the admissible squared uncertainty."""
        return min(self.eps1 / (2 * self.mult1), self.eps2 / (6 * self.mult2))


# (name, kind, shape-in-units-of-p); kind "sym" packs the upper triangle.
_SPEC = (
    ("P", "sym", (1, 1)),
    ("R", "sym", (1, 1)),
    ("U1", "sym", (2, 2)),
    ("F", "sym", (1, 1)),
    ("W1", "sym", (1, 1)),
    ("H", "sym", (1, 1)),
    ("U4", "sym", (1, 1)),
    ("U2", "full", (1, 1)),
    ("U3", "full", (1, 1)),
    ("W2", "full", (1, 1)),
    ("Psi", "sym", (3, 3)),
    ("Q", "full", (1, 3)),
    ("N1", "full", (1, 3)),
    ("N2", "full", (1, 3)),
    ("eps1", "scalar", ()),
    ("eps2", "scalar", ()),
    ("mult1", "scalar", ()),
    ("mult2", "scalar", ()),
)


class VarLayout:
    """Packing of CertificateVars into a flat vector."""

    def __init__(self, n: int):
        self.n = n
        p = 2 * n
        self.slices: dict[str, slice] = {}
        self.shapes: dict[str, tuple] = {}
        self.kinds: dict[str, str] = {}
        off = 0
        for name, kind, units in _SPEC:
            shape = tuple(u * p for u in units)
            if kind == "sym":
                size = shape[0] * (shape[0] + 1) // 2
            elif kind == "full":
                size = shape[0] * shape[1]
            else:
                size = 1
            self.slices[name] = slice(off, off + size)
            self.shapes[name] = shape
            self.kinds[name] = kind
            off += size
        self.size = off

    def unpack(self, x: np.ndarray) -> CertificateVars:
        x = np.asarray(x, dtype=float)
        out = {}
        for name, sl in self.slices.items():
            kind = self.kinds[name]
            seg = x[sl]
            if kind == "scalar":
                out[name] = float(seg[0])
            elif kind == "full":
                out[name] = seg.reshape(self.shapes[name]).copy()
            else:
                m = self.shapes[name][0]
                M = np.zeros((m, m))
                iu = np.triu_indices(m)
                M[iu] = seg
                M = M + np.triu(M, 1).T
                out[name] = M
        return CertificateVars(**out)

    def pack(self, v: CertificateVars) -> np.ndarray:
        x = np.zeros(self.size)
        for name, sl in self.slices.items():
            kind = self.kinds[name]
            val = getattr(v, name)
            if kind == "scalar":
                x[sl] = val
            elif kind == "full":
                x[sl] = np.asarray(val).ravel()
            else:
                m = self.shapes[name][0]
                x[sl] = np.asarray(val)[np.triu_indices(m)]
        return x

    def names(self) -> list[str]:
        return [name for name, _, _ in _SPEC]


@dataclass
class LmiBlocks:
    c28: np.ndarray
    c29: np.ndarray
    c30: np.ndarray
    c31: np.ndarray
    # intermediate pieces, useful for audits and cross-checks
    Xi0: np.ndarray
    Xi1: np.ndarray
    Xi2: np.ndarray
    Y01: np.ndarray
    Y02: np.ndarray
    Ubold: np.ndarray


def _ubold(v: CertificateVars) -> np.ndarray:
    U23 = np.hstack([v.U2, v.U3])
    return np.block([[v.U1, U23.T], [U23, v.U4]])


def assemble_lmis(problem: LmiProblem, h: float, v: CertificateVars) -> LmiBlocks:
    """Evaluate the four LMI block matrices at the candidate ``v``."""
    p = problem.p
    if v.P.shape != (p, p) or v.Psi.shape != (3 * p, 3 * p) or v.Q.shape != (p, 3 * p):
        raise ValueError("certificate dimensions do not match the problem")
    S = problem.selectors()
    E1, E2, E3 = S["E1"], S["E2"], S["E3"]
    Phi0, Phi1, Phi2, Phi3 = S["Phi0"], S["Phi1"], S["Phi2"], S["Phi3"]
    Phi4, Phi5 = S["Phi4"], S["Phi5"]
    I3 = np.eye(3 * p)
    Ip = np.eye(p)
    Zp = np.zeros((p, p))

    Ub = _ubold(v)
    c28 = Ub - E2.T @ v.H @ E2

    Xi0 = (he(E1.T @ v.P @ Phi0) + Ub - Phi1.T @ v.W1 @ Phi1
           - he(Phi1.T @ v.W2 @ E2) - E1.T @ v.H @ E1
           + he(-Phi1.T @ v.N1 - Phi2.T @ v.N2
                + (E1 - E3).T @ (v.U2 @ E1 + v.U3 @ E2 + v.U4 @ E3)
                + Phi1.T @ v.Q)
           + v.Psi)
    Xi1 = (he(Phi0.T @ (v.W1 @ (E1 - E2) + v.W2 @ E2 + v.H @ E1))
           + E2.T @ v.F @ E2 + Phi0.T @ v.R @ Phi0)
    Xi2 = -E2.T @ v.F @ E2 + he(Phi4.T @ v.U1 @ Phi5 + E3.T @ v.U2 @ Phi0 - Phi3.T @ v.Q)

    Y0 = E1.T @ v.P
    Y1 = (E1 - E2).T @ v.W1 + Phi0.T @ v.R
    Y01 = Y0 + h * Y1
    Y2 = np.hstack([Phi4.T @ v.U1, E3.T @ v.U2, -v.Q.T])
    Y02 = np.hstack([Y0, h * Y2])

    c29 = np.block([
        [Xi0 + h * Xi1 + v.eps1 * I3, Y01],
        [Y01.T, -v.mult1 * Ip],
    ])
    c30 = h * v.R - v.mult1 * Ip
    Z3p = np.zeros((3 * p, p))
    c31 = np.block([
        [Xi0 + h * Xi2 + v.eps2 * I3, h * v.N1.T, h * v.N2.T, Y02],
        [h * v.N1, -h * v.R, Zp, np.zeros((p, 5 * p))],
        [h * v.N2, Zp, -3 * h * v.R, np.zeros((p, 5 * p))],
        [Y02.T, np.zeros((5 * p, p)), np.zeros((5 * p, p)), -v.mult2 * np.eye(5 * p)],
    ])
    del Z3p
    return LmiBlocks(c28=c28, c29=c29, c30=c30, c31=c31, Xi0=Xi0, Xi1=Xi1, Xi2=Xi2,
                     Y01=Y01, Y02=Y02, Ubold=Ub)


def affine_basis(problem: LmiProblem, h: float) -> dict[str, np.ndarray]:
    """Basis matrices of each constraint as a linear map of the packed variables.

    Returns a dict of arrays of shape (nvar, m, m) oriented so that feasibility
    means ``sum_i x_i B[i] >= 0`` (positive semidefinite).  Keys: c28, c29,
    c30, c31, P, R, Psi, scalars.
    """
    layout = VarLayout(problem.n)
    N = layout.size
    out: dict[str, list] = {k: [] for k in ("c28", "c29", "c30", "c31")}
    zero = assemble_lmis(problem, h, layout.unpack(np.zeros(N)))
    for name in out:
        if np.any(getattr(zero, name)):
            raise AssertionError("LMI map is not homogeneous")
    sign = {"c28": 1.0, "c29": -1.0, "c30": -1.0, "c31": -1.0}
    for i in range(N):
        e = np.zeros(N)
        e[i] = 1.0
        blocks = assemble_lmis(problem, h, layout.unpack(e))
        for name in out:
            out[name].append(sign[name] * getattr(blocks, name))
    basis = {k: np.array(v) for k, v in out.items()}
    for name in ("P", "R", "Psi"):
        m = layout.shapes[name][0]
        B = np.zeros((N, m, m))
        sl = layout.slices[name]
        iu = np.triu_indices(m)
        for j, (a, b) in enumerate(zip(*iu)):
            B[sl.start + j, a, b] = 1.0
            B[sl.start + j, b, a] = 1.0
        basis[name] = B
    S = np.zeros((N, 4, 4))
    for j, name in enumerate(("eps1", "eps2", "mult1", "mult2")):
        S[layout.slices[name].start, j, j] = 1.0
    basis["scalars"] = S
    return basis
