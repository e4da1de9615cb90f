"""Exact LTI propagation under zero-order hold, the DC-motor instance and MRMS."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matrix_time import ContinuousRealization, exp_and_gramian

__all__ = [
    "DcMotorParams",
    "dc_motor",
    "LtiPlant",
    "plant_step",
    "mrms",
    "DC_MOTOR_K",
    "DC_MOTOR_L",
    "STUDY_PARAMS",
    "ClosedLoopTrace",
    "run_closed_loop",
    "MODES",
]

# Pole-placement gains for the DC motor.
DC_MOTOR_K = (1.65, -6.26, -43.08)
DC_MOTOR_L = (69.11, 71.91, 24.13)


@dataclass(frozen=True)
class DcMotorParams:
    R_a: float = 7.2          # armature resistance [ohm]
    L_a: float = 0.0917       # armature inductance [H]
    B_M: float = 0.0004       # friction [N m s/rad]
    k_d: float = 0.1236       # torque constant [N m/(Wb A)]
    J: float = 0.0007046      # rotor inertia [kg m^2]

    def __post_init__(self):
        for name in ("R_a", "L_a", "B_M", "k_d", "J"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


# Rotor inertia ten times the printed value: with the printed J the sampled
# observer loop is unstable for every h above about 0.011 s, while this value
# places an observer pole at -5 and reproduces the reported feasibility limit.
STUDY_PARAMS = DcMotorParams(J=0.007046)


def dc_motor(params: DcMotorParams | None = None) -> ContinuousRealization:
    """State x = [armature current, angular velocity, angle error], output = angle error."""
    p = params or DcMotorParams()
    A = np.array([
        [-p.R_a / p.L_a, -p.k_d / p.L_a, 0.0],
        [p.k_d / p.J, -p.B_M / p.J, 0.0],
        [0.0, 1.0, 0.0],
    ])
    B = np.array([[1.0 / p.L_a], [0.0], [0.0]])
    C = np.array([[0.0, 0.0, 1.0]])
    K = np.array([DC_MOTOR_K])
    L = np.array(DC_MOTOR_L).reshape(3, 1)
    return ContinuousRealization(A=A, B=B, C=C, L=L, K=K)


class LtiPlant:
    """x' = A x + B u, y = C x, advanced exactly under piecewise-constant u."""

    def __init__(self, A, B, C, x0, t0: float = 0.0):
        self.A = np.asarray(A, dtype=float)
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.C.shape[1] != n:
            raise ValueError("inconsistent plant dimensions")
        self.x = np.asarray(x0, dtype=float).reshape(n).copy()
        if not np.all(np.isfinite(self.x)):
            raise ValueError("initial state must be finite")
        self.t = float(t0)
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    @classmethod
    def from_realization(cls, cr: ContinuousRealization, x0, t0: float = 0.0) -> "LtiPlant":
        return cls(cr.A, cr.B, cr.C, x0, t0)

    @property
    def y(self) -> np.ndarray:
        return self.C @ self.x

    def transition(self, delta: float) -> tuple[np.ndarray, np.ndarray]:
        """(e^{A delta}, int_0^delta e^{A tau} d tau B), cached per step length."""
        key = float(delta)
        if key not in self._cache:
            Phi, G = exp_and_gramian(self.A, key)
            self._cache[key] = (Phi, G @ self.B)
        return self._cache[key]

    def step(self, u, delta: float) -> np.ndarray:
        self.x = plant_step(self, u, delta)
        self.t += float(delta)
        return self.x


def plant_step(plant: LtiPlant, u, delta: float) -> np.ndarray:
    """State after holding u constant for ``delta`` seconds (plant is not mutated)."""
    if not delta > 0:
        raise ValueError("substep must be positive")
    Phi, Gamma = plant.transition(delta)
    u = np.asarray(u, dtype=float).reshape(Gamma.shape[1])
    return Phi @ plant.x + Gamma @ u


def mrms(signal, t_grid, window: float, t: float) -> float:
    """Moving root mean square over [t - window, t], trapezoid rule on the samples.

    ``signal`` and ``t_grid`` are matching 1-D arrays; the window must be
    covered by the grid.  Endpoints that fall between samples are linearly
    interpolated.
    """
    signal = np.asarray(signal, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if not window > 0:
        raise ValueError("window must be positive")
    if t <= window:
        raise ValueError("need t > window")
    lo = t - window
    if t_grid.size < 2 or t_grid[0] > lo + 1e-12 or t_grid[-1] < t - 1e-12:
        raise ValueError("insufficient history for the MRMS window")
    inside = (t_grid > lo) & (t_grid < t)
    ts = np.concatenate(([lo], t_grid[inside], [t]))
    vals = np.interp(ts, t_grid, signal)
    return float(np.sqrt(np.trapezoid(vals**2, ts) / window))


# -- closed loop ---------------------------------------------------------------------

MODES = ("encrypted", "quantized", "ideal")


@dataclass
class ClosedLoopTrace:
    """Substep-resolution record of one closed-loop run.

    Grid arrays have one row per substep boundary (``t[i * substeps]`` is the
    i-th sampling instant).  Per-sample arrays have one row per sampling
    instant k = 0..K-1.  ``u`` on the grid is the input held from that point
    on (the last row repeats the final input).
    """

    mode: str
    h: float
    lam: float | None
    schedule: str
    substeps: int
    t: np.ndarray
    x: np.ndarray
    chi_v: np.ndarray
    u: np.ndarray
    y: np.ndarray
    zdot: np.ndarray
    t_k: np.ndarray
    chi_tilde: np.ndarray
    y_tilde: np.ndarray
    u_k: np.ndarray
    chi_d: np.ndarray               # controller state at t_k (decoded)
    snap: np.ndarray                # |chi_v(t_{k+1}^-) - chi_d(t_{k+1})|_inf
    eta_k: np.ndarray
    zdot_end: np.ndarray            # zdot(t_{k+1}^-) of each interval
    codes: list = field(default_factory=list)    # per-sample integer codes {X, Y, U, P}
    info: dict = field(default_factory=dict)

    @property
    def e(self) -> np.ndarray:
        return self.x - self.chi_v

    @property
    def z(self) -> np.ndarray:
        return np.hstack([self.e, self.chi_v])

    @property
    def norm_z(self) -> np.ndarray:
        return np.linalg.norm(self.z, axis=1)

    @property
    def eta(self) -> np.ndarray:
        """eta(t) on the grid (held from each sampling instant)."""
        idx = np.minimum(np.arange(self.t.size) // self.substeps, len(self.t_k) - 1)
        return self.eta_k[idx]

    @property
    def z_k(self) -> np.ndarray:
        """z(t_k) for each grid point's interval."""
        idx = np.minimum(np.arange(self.t.size) // self.substeps, len(self.t_k) - 1)
        return self.z[idx * self.substeps]

    def to_csv(self, path) -> None:
        n, m, r = self.x.shape[1], self.u.shape[1], self.y.shape[1]
        cols = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
                + [f"y{i + 1}" for i in range(r)] + ["norm_z", "eta_norm"])
        data = np.column_stack([self.t, self.x, self.u, self.y, self.norm_z,
                                np.linalg.norm(self.eta, axis=1)])
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def run_closed_loop(cr: ContinuousRealization, h: float, lam: float | None, schedule,
                    mode: str = "quantized", horizon: float = 10.0, x0=None, chi0=None,
                    substeps: int = 50, crypto_params=None, seed: int = 0,
                    transcript: list | None = None, crypto_gain: int | None = None
                    ) -> ClosedLoopTrace:
    """Lock-step plant/controller simulation.

    ``mode`` is ``"encrypted"`` (ciphertext controller with a plant-side
    codec), ``"quantized"`` (the integer reference recursion) or ``"ideal"``
    (unquantized sampled-data observer).  The plant and the virtual observer
    state are propagated exactly on ``substeps`` equal substeps per sample;
    at each sample the virtual state is re-synchronized with the controller
    state and the mismatch is recorded in ``snap``.

    With ``transcript`` (a list), encrypted runs append one record per sample
    and the encrypted setup is stored in ``info["setup"]``.
    """
    from .controller import (
        IntegerRealization,
        QuantizedControllerState,
        controller_step,
        decode,
        quantized_step,
        setup_encrypted,
    )
    from .crypto import CryptoParams
    from .matrix_time import virtual_realization
    from .quantizer import GainSchedule

    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not h > 0:
        raise ValueError("sampling interval must be positive")
    if substeps < 1:
        raise ValueError("substeps must be positive")
    steps = int(round(horizon / h))
    if steps < 1 or abs(steps * h - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon must be a positive multiple of h")
    if not isinstance(schedule, GainSchedule):
        schedule = GainSchedule.from_dict(schedule)
    n, m, r = cr.n, cr.m, cr.r
    x0 = np.array([0.0] * (n - 1) + [1.0]) if x0 is None else np.asarray(x0, float).reshape(n)
    chi0 = np.zeros(n) if chi0 is None else np.asarray(chi0, float).reshape(n)
    delta = h / substeps

    plant = LtiPlant.from_realization(cr, x0)
    Phi_p, Gam_p = plant.transition(delta)

    info: dict = {}
    if mode == "ideal":
        A_v, B_v, L_v, D = cr.A, cr.B, cr.L, np.zeros((n, n))
        K_bar, C_bar = cr.K, cr.C
        M = np.zeros((2 * n, n + r))
    else:
        if lam is None or not lam > 0:
            raise ValueError("quantized and encrypted modes need a positive Lambda")
        R = IntegerRealization.quantize(cr, h, lam)
        real = R.as_real()
        v = virtual_realization(real["A_d"], real["B_d"], real["L_d"], h)
        A_v, B_v, L_v, D = v.A_v, v.B_v, v.L_v, v.D
        K_bar, C_bar = real["K"], real["C"]
        from .stability.bounds import realized_uncertainty
        M = realized_uncertainty(cr, h, real["A_d"], real["B_d"], real["L_d"], real["C"],
                                 real["K"]).M
    Phi_v, G_v = exp_and_gramian(A_v, delta)

    total = steps * substeps
    t = np.arange(total + 1) / substeps * h
    xs = np.empty((total + 1, n))
    chis = np.empty((total + 1, n))
    us = np.empty((total + 1, m))
    ys = np.empty((total + 1, r))
    zdot = np.empty((total + 1, 2 * n))
    chi_tilde = np.empty((steps, n))
    y_tilde = np.empty((steps, r))
    u_k = np.empty((steps, m))
    chi_d_rec = np.empty((steps, n))
    snap = np.zeros(steps)
    zdot_end = np.empty((steps, 2 * n))
    codes: list = []

    if mode == "quantized":
        qstate = QuantizedControllerState(R, schedule, chi0.copy())
    elif mode == "encrypted":
        params = crypto_params or CryptoParams.with_bits(128, 4, seed=seed)
        rng = np.random.default_rng(seed)
        enc_state, codec = setup_encrypted(R, schedule, params, rng, gain=crypto_gain)
        chi_ct = codec.encrypt_state(chi0)
        info["crypto_gain"] = codec.gain
        info["setup"] = enc_state
        info["params"] = params

    chi_v = chi0.copy()
    chi_ctrl = chi0.copy()
    for k in range(steps):
        i0 = k * substeps
        y = cr.C @ plant.x
        if mode == "ideal":
            chi_bar, y_bar = chi_ctrl, y
            u = cr.K @ chi_bar
            rec = {}
        elif mode == "quantized":
            u, _ = quantized_step(qstate, y)
            rec = dict(qstate.last)
        else:
            y_ct = codec.encode_output(y)
            u_ct, chi_next_ct = controller_step(enc_state, y_ct, chi_ct)
            u = codec.decode_input(u_ct)
            if transcript is not None:
                transcript.append({"k": k, "y": y_ct, "u": u_ct, "chi_prime": chi_next_ct,
                                   "chi": chi_ct})
            rec = {"X": codec.last["X"], "Y": codec.last["Y"], "U": codec.last["U"]}
        if mode != "ideal":
            lam_k = schedule(k)
            chi_bar = decode(rec["X"], lam_k)
            y_bar = decode(rec["Y"], lam * lam_k)
        chi_tilde[k] = chi_bar - chi_v
        y_tilde[k] = y_bar - y
        u_k[k] = u
        chi_d_rec[k] = chi_ctrl
        # held input of the virtual observer over [t_k, t_k+1)
        w = B_v @ u + L_v @ (y_bar - C_bar @ chi_bar) + D @ chi_tilde[k]
        gw = G_v @ w
        for j in range(substeps):
            i = i0 + j
            xs[i], chis[i], us[i], ys[i] = plant.x, chi_v, u, cr.C @ plant.x
            xdot = cr.A @ plant.x + cr.B @ u
            cdot = A_v @ chi_v + w
            zdot[i] = np.concatenate([xdot - cdot, cdot])
            plant.x = Phi_p @ plant.x + Gam_p @ u
            plant.t += delta
            chi_v = Phi_v @ chi_v + gw
        xdot = cr.A @ plant.x + cr.B @ u
        cdot = A_v @ chi_v + w
        zdot_end[k] = np.concatenate([xdot - cdot, cdot])
        if mode == "ideal":
            chi_next = chi_v.copy()
        elif mode == "quantized":
            chi_next = qstate.chi_d
            rec["P"] = qstate.last["P"]
        else:
            chi_ct = codec.reencrypt_state(chi_next_ct)
            chi_next = codec.chi
            rec["P"] = codec.last["P"]
        if mode != "ideal":
            codes.append(rec)
        snap[k] = float(np.max(np.abs(chi_v - chi_next)))
        chi_v = chi_next.copy()
        chi_ctrl = chi_next.copy()
        if not (np.all(np.isfinite(plant.x)) and np.all(np.isfinite(chi_v))):
            raise FloatingPointError(f"state diverged at sample {k}")
    last = total
    xs[last], chis[last], us[last], ys[last] = plant.x, chi_v, us[last - 1], cr.C @ plant.x
    xdot = cr.A @ plant.x + cr.B @ us[last]
    zdot[last] = np.concatenate([xdot, np.zeros(n)])  # no held observer input past the horizon
    eta_k = np.hstack([chi_tilde, y_tilde]) @ M.T
    return ClosedLoopTrace(
        mode=mode, h=float(h), lam=None if lam is None else float(lam),
        schedule=schedule.label(), substeps=substeps, t=t, x=xs, chi_v=chis, u=us, y=ys,
        zdot=zdot, t_k=np.arange(steps) * h, chi_tilde=chi_tilde, y_tilde=y_tilde, u_k=u_k,
        chi_d=chi_d_rec, snap=snap, eta_k=eta_k, zdot_end=zdot_end, codes=codes, info=info,
    )
