"""Matrix exponential/logarithm and the sampled-data realizations built on them.

``expm`` is the scaling-and-squaring Pade scheme with Higham's 1-norm
thresholds; ``logm`` is inverse scaling-and-squaring (repeated
Denman-Beavers square roots followed by a Gauss-Legendre Pade evaluation of
``log(I + Y)``).  Both operate on small dense real matrices, which is all the
controller pipeline needs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MatrixFunctionError",
    "ContinuousRealization",
    "DiscreteRealization",
    "VirtualRealization",
    "expm",
    "logm",
    "sqrtm",
    "gramian",
    "exp_and_gramian",
    "discretize_zoh",
    "virtual_realization",
]


class MatrixFunctionError(ValueError):
    """A matrix function is undefined (or numerically unreachable) for the input."""


# Pade numerator coefficients b_0..b_m for the [m/m] approximant of exp.
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
# Largest 1-norm for which the degree-m approximant meets unit roundoff
# (Higham 2005, Table 2.3).
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _square(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise MatrixFunctionError(f"{name} needs a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise MatrixFunctionError(f"{name} needs finite entries")
    return M


def _pade_exp(M: np.ndarray, m: int) -> np.ndarray:
    b = _PADE[m]
    n = M.shape[0]
    ident = np.eye(n)
    M2 = M @ M
    if m == 13:
        M4 = M2 @ M2
        M6 = M2 @ M4
        U = M @ (M6 @ (b[13] * M6 + b[11] * M4 + b[9] * M2)
                 + b[7] * M6 + b[5] * M4 + b[3] * M2 + b[1] * ident)
        V = (M6 @ (b[12] * M6 + b[10] * M4 + b[8] * M2)
             + b[6] * M6 + b[4] * M4 + b[2] * M2 + b[0] * ident)
    else:
        powers = [ident, M2]
        for _ in range(2, m // 2 + 1):
            powers.append(powers[-1] @ M2)
        U = M @ sum(b[2 * j + 1] * powers[j] for j in range(m // 2 + 1))
        V = sum(b[2 * j] * powers[j] for j in range(m // 2 + 1))
    return np.linalg.solve(V - U, V + U)


def expm(M) -> np.ndarray:
    """Matrix exponential of a real square matrix."""
    M = _square(M, "expm")
    if M.shape[0] == 0:
        return M.copy()
    norm = np.linalg.norm(M, 1)
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            return _pade_exp(M, m)
    s = max(0, int(np.ceil(np.log2(norm / _THETA[13]))))
    E = _pade_exp(M / 2.0**s, 13)
    for _ in range(s):
        E = E @ E
    return E


def _check_log_spectrum(M: np.ndarray) -> None:
    eig = np.linalg.eigvals(M)
    scale = max(1.0, float(np.max(np.abs(eig))))
    on_cut = (np.abs(eig.imag) <= 1e-12 * scale) & (eig.real <= 1e-14 * scale)
    if np.any(on_cut):
        raise MatrixFunctionError(
            "no principal logarithm: eigenvalue(s) on the closed negative real axis "
            f"{eig[on_cut]}"
        )


def sqrtm(M, tol: float = 1e-15, max_iter: int = 100) -> np.ndarray:
    """Principal square root by the scaled Denman-Beavers product iteration."""
    M = _square(M, "sqrtm")
    n = M.shape[0]
    ident = np.eye(n)
    X = M.copy()
    Y = M.copy()
    for _ in range(max_iter):
        sign, logdet = np.linalg.slogdet(X)
        mu = np.exp(-logdet / (2 * n)) if sign != 0 else 1.0
        Xinv = np.linalg.inv(X)
        Y = 0.5 * mu * Y @ (ident + Xinv / mu**2)
        X = 0.5 * (ident + 0.5 * (mu**2 * X + Xinv / mu**2))
        if np.linalg.norm(X - ident, 1) <= tol * n:
            return Y
    raise MatrixFunctionError("square-root iteration did not converge")


_LOG_NODES, _LOG_WEIGHTS = np.polynomial.legendre.leggauss(10)
_LOG_NODES = 0.5 * (_LOG_NODES + 1.0)
_LOG_WEIGHTS = 0.5 * _LOG_WEIGHTS


def logm(M, max_roots: int = 60) -> np.ndarray:
    """Principal matrix logarithm.

    Raises MatrixFunctionError when M has an eigenvalue on the closed negative
    real axis (including zero).
    """
    M = _square(M, "logm")
    n = M.shape[0]
    if n == 0:
        return M.copy()
    _check_log_spectrum(M)
    ident = np.eye(n)
    X = M
    k = 0
    while np.linalg.norm(X - ident, 1) > 0.25:
        if k >= max_roots:
            raise MatrixFunctionError("logm: too many square roots required")
        X = sqrtm(X)
        k += 1
    Y = X - ident
    L = np.zeros_like(Y)
    for s, w in zip(_LOG_NODES, _LOG_WEIGHTS):
        L += w * np.linalg.solve(ident + s * Y, Y)
    return 2.0**k * L


def exp_and_gramian(A, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (e^{Ah}, int_0^h e^{A tau} d tau) from one augmented exponential."""
    A = _square(A, "exp_and_gramian")
    n = A.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = A
    block[:n, n:] = np.eye(n)
    E = expm(block * h)
    return E[:n, :n], E[:n, n:]


def gramian(A, h: float) -> np.ndarray:
    return exp_and_gramian(A, h)[1]


def _as_2d(M, rows: int | None = None) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if rows is not None and M.shape[0] != rows and M.shape[1] == rows:
        M = M.T
    return M


@dataclass(frozen=True)
class ContinuousRealization:
    """Plant (A, B, C) together with observer gain L and feedback gain K."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    L: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        A = _square(self.A, "ContinuousRealization.A")
        n = A.shape[0]
        B = _as_2d(self.B, n)
        C = _as_2d(self.C)
        L = _as_2d(self.L, n)
        K = _as_2d(self.K)
        if B.shape[0] != n or C.shape[1] != n or L.shape != (n, C.shape[0]) \
                or K.shape != (B.shape[1], n):
            raise ValueError(
                f"inconsistent dimensions A{A.shape} B{B.shape} C{C.shape} "
                f"L{L.shape} K{K.shape}"
            )
        for name, val in zip("ABCLK", (A, B, C, L, K)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def r(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class DiscreteRealization:
    A_d: np.ndarray
    B_d: np.ndarray
    L_d: np.ndarray
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("sampling interval must be positive")


@dataclass(frozen=True)
class VirtualRealization:
    """Continuous-time dynamics whose exact samples reproduce a quantized controller."""

    A_v: np.ndarray
    B_v: np.ndarray
    L_v: np.ndarray
    D: np.ndarray
    gramian: np.ndarray
    h: float


def discretize_zoh(cr: ContinuousRealization, h: float) -> DiscreteRealization:
    """Exact zero-order-hold discretization of the plant input and observer injection."""
    if not h > 0:
        raise ValueError("sampling interval must be positive")
    A_d, G = exp_and_gramian(cr.A, h)
    return DiscreteRealization(A_d=A_d, B_d=G @ cr.B, L_d=G @ cr.L, h=float(h))


def virtual_realization(A_d_bar, B_d_bar, L_d_bar, h: float) -> VirtualRealization:
    """Continuous realization (A_v, B_v, L_v, D) matching a quantized discrete one.

    Raises MatrixFunctionError if the quantized state matrix has no principal
    logarithm or the resulting Gramian is singular; the caller should treat
    that as an inadmissible (h, Lambda) combination.
    """
    if not h > 0:
        raise ValueError("sampling interval must be positive")
    A_d_bar = _square(A_d_bar, "virtual_realization")
    A_v = logm(A_d_bar) / h
    G = gramian(A_v, h)
    if np.linalg.cond(G) > 1e12:
        raise MatrixFunctionError("virtual Gramian is numerically singular")
    B_v = np.linalg.solve(G, _as_2d(B_d_bar, A_v.shape[0]))
    L_v = np.linalg.solve(G, _as_2d(L_d_bar, A_v.shape[0]))
    D = np.linalg.solve(G, A_d_bar)
    return VirtualRealization(A_v=A_v, B_v=B_v, L_v=L_v, D=D, gramian=G, h=float(h))
