"""Encrypted observer-based controller, its plant-side codec, and the quantized reference.

Gain ledger (integers in parentheses are what the ciphertexts carry):

    chi(t_k)      (X = round(Lambda_k chi))                 scale Lambda_k
    y(t_k)        (Y = round(Lambda Lambda_k y))            scale Lambda Lambda_k
    A_d           (round(Lambda^2 A_d))                     scale Lambda^2
    B_d, L_d, C, K                                          scale Lambda
    u = K D(chi)  (U = K X)                                 scale Lambda Lambda_k
    C D(chi)      (C X)                                     scale Lambda Lambda_k
    chi'          (P = A X + B U + L (Y - C X))             scale Lambda^2 Lambda_k

Every ciphertext additionally carries the crypto gain G (a power of two chosen
so that the worst-case noise of one controller step stays below G/2); G is
removed by ``decrypt_scaled`` and never mixes with the quantization gains.

The quantized reference runs the same integer recursion with exact Python
integers, so with an adequate noise budget both loops produce identical
integers U and P at every sample.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import crypto
from .crypto import (
    CryptoParams,
    GswCiphertext,
    LweCiphertext,
    NoiseBudget,
    PlaintextOverflow,
    SecretKey,
)
from .matrix_time import ContinuousRealization, discretize_zoh
from .quantizer import GainSchedule, encode_integer

__all__ = [
    "IntegerRealization",
    "integer_update",
    "decode",
    "observer_codes",
    "output_codes",
    "QuantizedControllerState",
    "quantized_step",
    "EncryptedControllerState",
    "controller_step",
    "PlantSideCodec",
    "setup_encrypted",
    "encode_output",
    "decode_input",
    "reencrypt_state",
    "write_transcript",
    "read_transcript",
    "TranscriptError",
]


def _obj(a) -> np.ndarray:
    return np.asarray(a, dtype=object)


@dataclass(frozen=True)
class IntegerRealization:
    """Integer controller matrices and the static gain they were scaled by."""

    A: np.ndarray
    B: np.ndarray
    L: np.ndarray
    C: np.ndarray
    K: np.ndarray
    lam: float
    h: float

    @classmethod
    def quantize(cls, cr: ContinuousRealization, h: float, lam: float) -> "IntegerRealization":
        d = discretize_zoh(cr, h)
        return cls(
            A=encode_integer(d.A_d, lam * lam),
            B=encode_integer(d.B_d, lam),
            L=encode_integer(d.L_d, lam),
            C=encode_integer(cr.C, lam),
            K=encode_integer(cr.K, lam),
            lam=float(lam),
            h=float(h),
        )

    def as_real(self) -> dict:
        """(A_d_bar, B_d_bar, L_d_bar, C_bar, K_bar) as floats."""
        lam = self.lam
        return {
            "A_d": self.A.astype(float) / (lam * lam),
            "B_d": self.B.astype(float) / lam,
            "L_d": self.L.astype(float) / lam,
            "C": self.C.astype(float) / lam,
            "K": self.K.astype(float) / lam,
        }

    @property
    def n(self) -> int:
        return self.A.shape[0]


def observer_codes(chi, lam_k: float) -> np.ndarray:
    return encode_integer(np.asarray(chi, dtype=float).reshape(-1), lam_k)


def output_codes(y, lam: float, lam_k: float) -> np.ndarray:
    return encode_integer(np.asarray(y, dtype=float).reshape(-1), lam * lam_k)


def integer_update(R: IntegerRealization, X, Y) -> tuple[np.ndarray, np.ndarray]:
    """U = K X and P = A X + B U + L (Y - C X) in exact integers."""
    X, Y = _obj(X), _obj(Y)
    U = R.K.dot(X)
    P = R.A.dot(X) + R.B.dot(U) + R.L.dot(Y - R.C.dot(X))
    return _obj(U), _obj(P)


def decode(codes, scale: float) -> np.ndarray:
    """Integer codes divided by their (real) scale."""
    return np.array([float(int(c)) for c in np.asarray(codes, dtype=object).reshape(-1)]) / scale


# -- quantized reference --------------------------------------------------------------

@dataclass
class QuantizedControllerState:
    realization: IntegerRealization
    schedule: GainSchedule
    chi_d: np.ndarray
    k: int = 0
    last: dict = field(default_factory=dict)

    @property
    def lam_k(self) -> float:
        return self.schedule(self.k)


def quantized_step(state: QuantizedControllerState, y) -> tuple[np.ndarray, np.ndarray]:
    """One step of the quantized controller; advances ``state`` and returns (u, chi_d_next)."""
    R = state.realization
    lam_k = state.lam_k
    X = observer_codes(state.chi_d, lam_k)
    Y = output_codes(y, R.lam, lam_k)
    U, P = integer_update(R, X, Y)
    u = decode(U, R.lam * lam_k)
    chi_next = decode(P, R.lam * R.lam * lam_k)
    state.last = {"X": X, "Y": Y, "U": U, "P": P}
    state.chi_d = chi_next
    state.k += 1
    return u, chi_next


# -- encrypted controller ------------------------------------------------------------

@dataclass(frozen=True)
class EncryptedControllerState:
    """GSW-encrypted controller matrices.  Holds no key and no plaintext signal."""

    A: GswCiphertext
    B: GswCiphertext
    L: GswCiphertext
    C: GswCiphertext
    K: GswCiphertext

    @property
    def params(self) -> CryptoParams:
        return self.A.params

    def matrices(self) -> dict:
        return {"A": self.A, "B": self.B, "L": self.L, "C": self.C, "K": self.K}


def controller_step(state: EncryptedControllerState, y: LweCiphertext,
                    chi: LweCiphertext) -> tuple[LweCiphertext, LweCiphertext]:
    """u = K D(chi);  chi' = A D(chi) + B D(u) + L (D(y) - D(C D(chi)))  (all mod q)."""
    d_chi = crypto.decompose(chi)
    u = crypto.gsw_matvec(state.K, d_chi)
    c_chi = crypto.gsw_matvec(state.C, d_chi)
    innovation = crypto.decompose(y) - crypto.decompose(c_chi)
    chi_next = crypto.add(
        crypto.add(crypto.gsw_matvec(state.A, d_chi), crypto.gsw_matvec(state.B, crypto.decompose(u))),
        crypto.gsw_matvec(state.L, innovation),
    )
    return u, chi_next


def _row_abs_sum(M) -> np.ndarray:
    return np.array([sum(abs(int(v)) for v in row) for row in _obj(M)], dtype=object)


class PlantSideCodec:
    """Key holder: quantizes and encrypts y and chi, decrypts u and chi'."""

    def __init__(self, key: SecretKey, realization: IntegerRealization, schedule: GainSchedule,
                 gain: int, rng: np.random.Generator):
        self.key = key
        self.realization = realization
        self.lam = realization.lam
        self.schedule = schedule
        self.gain = int(gain)
        self.rng = rng
        self.k = 0
        self.chi: np.ndarray | None = None
        self.last: dict = {}
        R = realization
        self._absA, self._absB, self._absL = _row_abs_sum(R.A), _row_abs_sum(R.B), _row_abs_sum(R.L)
        self._absC, self._absK = _row_abs_sum(R.C), _row_abs_sum(R.K)

    @property
    def params(self) -> CryptoParams:
        return self.key.params

    def lam_k(self, k: int | None = None) -> float:
        return self.schedule(self.k if k is None else k)

    def _check_room(self, X, Y):
        """Worst-case |P| and |U| for these inputs must stay below q / (2 G)."""
        xm = max((abs(int(v)) for v in X), default=0)
        ym = max((abs(int(v)) for v in Y), default=0)
        um = max(self._absK, default=0) * xm
        cm = max(self._absC, default=0) * xm
        pm = max(self._absA, default=0) * xm + max(self._absB, default=0) * um \
            + max(self._absL, default=0) * (ym + cm)
        if 2 * self.gain * max(pm, um, cm, ym, xm) >= self.params.q:
            raise PlaintextOverflow(
                f"controller plaintexts may exceed q/2 at step {self.k} (bound {pm})")

    def encrypt_state(self, chi) -> LweCiphertext:
        """Encrypt round(Lambda_k chi) for the current k."""
        self.chi = np.asarray(chi, dtype=float).reshape(-1)
        X = observer_codes(self.chi, self.lam_k())
        self.last["X"] = X
        return crypto.encrypt_vector(X, self.gain, self.key, self.rng)

    def encode_output(self, y) -> LweCiphertext:
        Y = output_codes(y, self.lam, self.lam_k())
        self.last["Y"] = Y
        if "X" in self.last:
            self._check_room(self.last["X"], Y)
        return crypto.encrypt_vector(Y, self.gain, self.key, self.rng)

    def decode_input(self, u: LweCiphertext) -> np.ndarray:
        U = _obj(crypto.decrypt_scaled(u, self.gain, self.key)).reshape(-1)
        self.last["U"] = U
        return decode(U, self.lam * self.lam_k())

    def reencrypt_state(self, chi_prime: LweCiphertext) -> LweCiphertext:
        """Decode chi' by Lambda^2 Lambda_k, then re-encrypt at Lambda_{k+1}; advances k."""
        P = _obj(crypto.decrypt_scaled(chi_prime, self.gain, self.key)).reshape(-1)
        self.last["P"] = P
        chi = decode(P, self.lam * self.lam * self.lam_k())
        self.k += 1
        return self.encrypt_state(chi)


def _dry_run_noise(state: EncryptedControllerState, n: int, r: int) -> tuple[int, int]:
    """Noise bounds of (u, chi') for fresh inputs, independent of the data."""
    p = state.params
    fresh = NoiseBudget(p.e_max, 1)
    chi = LweCiphertext(np.zeros((n, p.dim), dtype=p.dtype), p, fresh)
    y = LweCiphertext(np.zeros((r, p.dim), dtype=p.dtype), p, fresh)
    u, chi_next = controller_step(state, y, chi)
    return u.noise.bound, chi_next.noise.bound


def setup_encrypted(realization: IntegerRealization, schedule: GainSchedule,
                    params: CryptoParams, rng: np.random.Generator,
                    gain: int | None = None) -> tuple[EncryptedControllerState, PlantSideCodec]:
    """Key generation, GSW encryption of the matrices, and the crypto gain.

    The key is drawn from ``rng`` first, then the five matrices in the order
    A, B, L, C, K; the codec keeps using the same stream for every later
    encryption.
    """
    key = crypto.keygen(params, rng)
    R = realization
    mats = {name: crypto.encrypt_gsw_matrix(getattr(R, name), key, rng)
            for name in ("A", "B", "L", "C", "K")}
    state = EncryptedControllerState(**mats)
    bu, bchi = _dry_run_noise(state, R.n, R.C.shape[0])
    need = 2 * max(bu, bchi, params.e_max)
    auto = 1 << need.bit_length()
    if gain is None:
        gain = auto
    elif gain <= need:
        raise crypto.NoiseBudgetExceeded(f"gain {gain} cannot absorb the step noise {need // 2}")
    return state, PlantSideCodec(key, R, schedule, gain, rng)


def encode_output(codec: PlantSideCodec, y) -> LweCiphertext:
    return codec.encode_output(y)


def decode_input(codec: PlantSideCodec, u: LweCiphertext) -> np.ndarray:
    return codec.decode_input(u)


def reencrypt_state(codec: PlantSideCodec, chi_prime: LweCiphertext) -> LweCiphertext:
    return codec.reencrypt_state(chi_prime)


# -- protocol transcript ----------------------------------------------------------------

class TranscriptError(ValueError):
    pass


TRANSCRIPT_TAG = "encobs-transcript 1"
RECORD_FIELDS = ("y", "u", "chi_prime", "chi")


def write_transcript(path, header: dict, setup: EncryptedControllerState, records) -> Path:
    """JSON lines: a header (parameters, run config, encrypted matrices), then one
    record {k, y, u, chi_prime, chi} per sample with base64 ciphertexts.

    ``chi`` is the encrypted observer state the controller consumed at step k.
    """
    path = Path(path)
    head = dict(header)
    head["format"] = TRANSCRIPT_TAG
    head["params"] = {k: int(v) for k, v in setup.params.header().items()}
    head["matrices"] = {name: crypto.to_text(M) for name, M in setup.matrices().items()}
    with path.open("w") as fh:
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for rec in records:
            row = {"k": int(rec["k"])}
            for f in RECORD_FIELDS:
                row[f] = rec[f] if isinstance(rec[f], str) else crypto.to_text(rec[f])
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def read_transcript(path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise TranscriptError("empty transcript")
    try:
        head = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:] if line.strip()]
    except json.JSONDecodeError as exc:
        raise TranscriptError(f"corrupt transcript: {exc}") from exc
    if head.get("format") != TRANSCRIPT_TAG:
        raise TranscriptError("not a protocol transcript")
    for i, rec in enumerate(records):
        missing = {"k", *RECORD_FIELDS} - set(rec)
        extra = set(rec) - {"k", *RECORD_FIELDS}
        if missing or extra:
            raise TranscriptError(f"record {i} has fields {sorted(rec)}")
    return head, records
