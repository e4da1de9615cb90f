"""Log-barrier interior-point method for LMI margin maximization.

Problem solved:

    maximize t  subject to  sum_i x_i B_j[i] - t I  >= 0   for every block j,
                            |x_i| <= box.

The box keeps the homogeneous LMI problem bounded, so the optimal margin t*
is finite and comparable across sampling intervals.  The method follows the
central path of

    f_s(x, t) = -s t - sum_j logdet(F_j(x) - t I) - sum_i log(box^2 - x_i^2)

with Newton steps and backtracking; on a centered point the duality gap is at most
nu / s where nu is the total barrier parameter, which gives the upper bound
used to declare infeasibility early.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import solve_triangular

__all__ = ["SolverOptions", "SolveResult", "LmiSystem", "maximize_margin"]


@dataclass(frozen=True)
class SolverOptions:
    """``mode="feasibility"`` stops as soon as the margin reaches ``tol``;
    ``mode="maximize"`` follows the path until the relative gap is below
    ``rel_gap``."""

    mode: str = "maximize"
    tol: float = 1e-7
    rel_gap: float = 1e-2
    box: float = 1.0
    s0: float | None = None      # default: the barrier parameter nu
    s_factor: float = 20.0
    s_max: float = 1e13
    newton_tol: float = 1e-5
    max_newton: int = 60
    max_total: int = 2000

    def __post_init__(self):
        if self.mode not in ("feasibility", "maximize"):
            raise ValueError(f"unknown solver mode {self.mode!r}")
        if not self.tol > 0 or not self.box > 0 or not self.s_factor > 1:
            raise ValueError("invalid solver options")


@dataclass
class SolveResult:
    status: str              # "feasible", "infeasible" or "numerical"
    x: np.ndarray
    margin: float            # achieved t
    upper_bound: float       # bound on the optimal t from the last centered point
    iterations: int
    history: list = field(default_factory=list)   # (s, t, upper bound) per stage
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


class LmiSystem:
    """A list of linear matrix blocks sharing one variable vector.

    Each block is an array of shape (N, m, m): block j evaluates to
    sum_i x_i B_j[i].  Variables a block does not touch are dropped from its
    Newton contribution.
    """

    def __init__(self, blocks: dict[str, np.ndarray]):
        if not blocks:
            raise ValueError("no blocks")
        sizes = {B.shape[0] for B in blocks.values()}
        if len(sizes) != 1:
            raise ValueError("blocks disagree on the number of variables")
        self.nvar = sizes.pop()
        self.names = list(blocks)
        self.blocks = []
        self.factors = []
        for name in self.names:
            B = np.asarray(blocks[name], dtype=float)
            if B.ndim != 3 or B.shape[1] != B.shape[2]:
                raise ValueError(f"block {name} must have shape (N, m, m)")
            if not np.allclose(B, B.transpose(0, 2, 1), atol=1e-12):
                raise ValueError(f"block {name} is not symmetric")
            active = np.flatnonzero(np.any(B != 0, axis=(1, 2)))
            self.blocks.append((active, B[active]))
            self.factors.append(_low_rank(B[active]))
        self.nu = sum(B.shape[1] for _, B in self.blocks)

    def evaluate(self, x: np.ndarray) -> list[np.ndarray]:
        return [np.tensordot(x[a], B, axes=1) for a, B in self.blocks]

    def min_eigs(self, x: np.ndarray) -> dict[str, float]:
        return {name: float(np.linalg.eigvalsh(F)[0])
                for name, F in zip(self.names, self.evaluate(x))}


def _low_rank(B: np.ndarray, rel: float = 1e-13):
    """Eigen-factors of the basis: B_i = sum_{a in i} lam_a w_a w_a'.

    Returns W (m x R) and the sparse k x R matrix with lam_a at (i, a).
    """
    cols, lams, owner = [], [], []
    for i, Bi in enumerate(B):
        ev, V = np.linalg.eigh(Bi)
        keep = np.abs(ev) > rel * max(1.0, np.abs(ev).max())
        if not np.any(keep):
            raise ValueError("basis matrix is numerically zero")
        cols.append(V[:, keep])
        lams.append(ev[keep])
        owner.extend([i] * int(keep.sum()))
    lam = np.concatenate(lams)
    R = lam.size
    At = sparse.csr_matrix((lam, (np.array(owner), np.arange(R))), shape=(len(B), R))
    return np.hstack(cols), At


def _barrier_terms(system: LmiSystem, x, t, box):
    """Value, gradient and Hessian of the barrier in (x, t); None if outside the domain."""
    N = system.nvar
    grad = np.zeros(N + 1)
    hess = np.zeros((N + 1, N + 1))
    val = 0.0
    for (active, _), (W, At), F in zip(system.blocks, system.factors, system.evaluate(x)):
        m = F.shape[0]
        S = F - t * np.eye(m)
        try:
            Lc = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return None
        val -= 2.0 * np.sum(np.log(np.diag(Lc)))
        Linv = np.linalg.inv(Lc)
        Sinv = Linv.T @ Linv
        # tr(S^-1 B_i S^-1 B_j) from the rank-one terms lam_a w_a w_a'
        SW = Sinv @ W
        K = W.T @ SW
        K *= K
        h_blk = At @ np.ascontiguousarray((At @ K).T)
        diagK = np.einsum("ia,ia->a", W, SW)
        S2W = np.einsum("ia,ia->a", SW, SW)
        idx = np.append(active, N)
        grad[active] -= At @ diagK
        grad[N] += np.trace(Sinv)
        cross = -(At @ S2W)
        block_h = np.empty((len(idx), len(idx)))
        block_h[:-1, :-1] = h_blk
        block_h[:-1, -1] = cross
        block_h[-1, :-1] = cross
        block_h[-1, -1] = np.sum(Sinv * Sinv)
        hess[np.ix_(idx, idx)] += block_h
    slack = box * box - x * x
    if np.any(slack <= 0):
        return None
    val -= np.sum(np.log(slack))
    grad[:N] += 2.0 * x / slack
    hess[np.arange(N), np.arange(N)] += 2.0 * (box * box + x * x) / slack**2
    return val, grad, hess


def maximize_margin(system: LmiSystem, options: SolverOptions | None = None,
                    x0: np.ndarray | None = None) -> SolveResult:
    """Maximize the common margin t of all blocks (see module docstring)."""
    opts = options or SolverOptions()
    N = system.nvar
    x = np.zeros(N) if x0 is None else np.clip(np.asarray(x0, float), -0.99 * opts.box,
                                                 0.99 * opts.box)
    mins = [float(np.linalg.eigvalsh(F)[0]) for F in system.evaluate(x)]
    t = min(mins) - 1.0
    nu = system.nu + 2 * N
    s = float(nu) if opts.s0 is None else opts.s0
    total = 0
    history = []
    best_x, best_t = x.copy(), t
    ub = math.inf

    def done(status, msg=""):
        return SolveResult(status=status, x=best_x, margin=best_t, upper_bound=ub,
                           iterations=total, history=history, message=msg)

    while s <= opts.s_max:
        for _ in range(opts.max_newton):
            terms = _barrier_terms(system, x, t, opts.box)
            if terms is None:
                return done("numerical", "iterate left the barrier domain")
            val, grad, hess = terms
            grad = grad.copy()
            grad[N] -= s
            f0 = val - s * t
            try:
                Lh = np.linalg.cholesky(hess)
            except np.linalg.LinAlgError:
                hess = hess + 1e-12 * np.trace(hess) / (N + 1) * np.eye(N + 1)
                try:
                    Lh = np.linalg.cholesky(hess)
                except np.linalg.LinAlgError:
                    return done("numerical", "Newton system is not positive definite")
            w = solve_triangular(Lh, -grad, lower=True)
            step = solve_triangular(Lh.T, w, lower=False)
            decrement = float(w @ w)
            if decrement / 2 <= opts.newton_tol:
                break
            alpha = 1.0
            slope = -decrement
            while True:
                xn = x + alpha * step[:N]
                tn = t + alpha * step[N]
                trial = _barrier_terms_value(system, xn, tn, opts.box)
                if trial is not None and trial - s * tn <= f0 + 0.25 * alpha * slope:
                    break
                alpha *= 0.5
                if alpha < 1e-14:
                    return done("numerical", "line search failed")
            x, t = xn, tn
            total += 1
            if t > best_t:
                best_x, best_t = x.copy(), t
            if opts.mode == "feasibility" and best_t >= opts.tol:
                return done("feasible")
            if total >= opts.max_total:
                return done("numerical", "iteration limit reached")
        ub = t + nu / s
        history.append((s, t, ub))
        if ub < opts.tol:
            return done("infeasible", f"margin upper bound {ub:.3e} below tolerance")
        if opts.mode == "maximize" and best_t >= opts.tol and nu / s <= opts.rel_gap * best_t:
            return done("feasible")
        s *= opts.s_factor
    status = "feasible" if best_t >= opts.tol else "infeasible"
    return done(status, "barrier parameter limit reached")


def _barrier_terms_value(system: LmiSystem, x, t, box):
    """Barrier value only (cheap path for the line search)."""
    slack = box * box - x * x
    if np.any(slack <= 0):
        return None
    val = -np.sum(np.log(slack))
    for F in system.evaluate(x):
        try:
            Lc = np.linalg.cholesky(F - t * np.eye(F.shape[0]))
        except np.linalg.LinAlgError:
            return None
        val -= 2.0 * np.sum(np.log(np.diag(Lc)))
    return val
