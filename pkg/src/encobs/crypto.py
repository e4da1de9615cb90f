"""LWE encryption with gain, digit decomposition and GSW-style multiplication.

Residues live in Z_q with q = omega**d.  When q is a power of two no larger
than 2**64 the arithmetic runs on uint64 with wrap-around followed by a mask;
otherwise residues are numpy object arrays of Python ints.  Every array
operation accepts leading batch dimensions:

    LWE body   (..., n_key + 1)
    GSW body   (..., n_key + 1, d (n_key + 1))
    digits     (..., d (n_key + 1))        digit j of coordinate i at j (n_key+1) + i

Noise bookkeeping is conservative: each ciphertext carries a bound on the
magnitude of its error term and the gain its plaintext is scaled by, and
``decrypt_scaled`` refuses to round when 2 * bound >= G.
"""
from __future__ import annotations

import base64
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CryptoParams",
    "SecretKey",
    "NoiseBudget",
    "LweCiphertext",
    "GswCiphertext",
    "DigitVector",
    "CryptoError",
    "PlaintextOverflow",
    "NoiseBudgetExceeded",
    "keygen",
    "encrypt",
    "decrypt",
    "decrypt_scaled",
    "add",
    "sub",
    "scalar_mul",
    "decompose",
    "recompose",
    "gadget_matrix",
    "encrypt_gsw",
    "external_product",
    "encrypt_vector",
    "encrypt_gsw_matrix",
    "gsw_matvec",
    "zero_ciphertext",
    "serialize",
    "deserialize",
    "to_text",
    "from_text",
]


class CryptoError(ValueError):
    pass


class PlaintextOverflow(CryptoError, OverflowError):
    pass


class NoiseBudgetExceeded(CryptoError):
    pass


@dataclass(frozen=True)
class CryptoParams:
    q: int
    n_key: int
    omega: int = 2
    d: int | None = None
    e_max: int = 1
    seed: int = 0

    def __post_init__(self):
        q, w = int(self.q), int(self.omega)
        if w < 2:
            raise ValueError("decomposition base must be at least 2")
        if self.n_key < 1:
            raise ValueError("key dimension must be positive")
        if self.e_max < 0:
            raise ValueError("e_max must be non-negative")
        d, p = 0, 1
        while p < q:
            p *= w
            d += 1
        if p != q or q < 2:
            raise ValueError(f"q = {q} is not a power of omega = {w}")
        if self.d is not None and self.d != d:
            raise ValueError(f"omega**d must equal q (omega={w}, d={self.d}, q={q})")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "d", d)

    @classmethod
    def with_bits(cls, bits: int, n_key: int, e_max: int = 1, seed: int = 0,
                  omega: int = 2) -> "CryptoParams":
        """q = 2**bits; omega must be a power of two whose exponent divides ``bits``."""
        b = omega.bit_length() - 1
        if omega < 2 or omega != 1 << b or bits % b:
            raise ValueError(f"base {omega} does not divide q = 2**{bits} into whole digits")
        return cls(q=1 << bits, n_key=n_key, omega=omega, e_max=e_max, seed=seed)

    @property
    def fast(self) -> bool:
        """uint64 arithmetic is exact when q is a power of two up to 2**64."""
        return self.q <= 1 << 64 and self.q & (self.q - 1) == 0

    @property
    def dtype(self):
        return np.uint64 if self.fast else object

    @property
    def width(self) -> int:
        """Bytes per serialized residue."""
        return max(1, ((self.q - 1).bit_length() + 7) // 8)

    @property
    def dim(self) -> int:
        return self.n_key + 1

    @property
    def digits_len(self) -> int:
        return self.d * (self.n_key + 1)

    def header(self) -> dict:
        return {"q": self.q, "n_key": self.n_key, "omega": self.omega, "d": self.d}


# -- residue helpers --------------------------------------------------------------

def _reduce(x, params: CryptoParams):
    if params.fast:
        x = np.asarray(x, dtype=np.uint64)
        if params.q == 1 << 64:
            return x
        return x & np.uint64(params.q - 1)
    return np.asarray(np.asarray(x, dtype=object) % params.q, dtype=object)


def _residues(values, params: CryptoParams):
    """Centered or arbitrary integers -> residues in [0, q)."""
    arr = np.asarray(values, dtype=object)
    red = np.asarray(arr % params.q, dtype=object).reshape(arr.shape)
    if params.fast:
        return red.astype(np.uint64)
    return red


def _centered(res, params: CryptoParams):
    """Residues -> centered representatives in [-q/2, q/2) as Python ints."""
    arr = np.asarray(res).astype(object)
    half = params.q // 2
    out = np.where(arr >= half, arr - params.q, arr)
    return np.asarray(out, dtype=object)


def _uniform(rng: np.random.Generator, shape, params: CryptoParams):
    bits = (params.q - 1).bit_length()
    if params.fast:
        return rng.integers(0, params.q, size=shape, dtype=np.uint64)
    words = (bits + 63) // 64
    acc = np.zeros(shape, dtype=object)
    for _ in range(words):
        w = rng.integers(0, 1 << 64, size=shape, dtype=np.uint64, endpoint=False)
        acc = acc * (1 << 64) + w.astype(object)
    return acc % params.q


def _errors(rng: np.random.Generator, shape, params: CryptoParams):
    if params.e_max == 0:
        return np.zeros(shape, dtype=np.int64)
    return rng.integers(-params.e_max, params.e_max, size=shape, endpoint=True)


def _dot_last(a, b, params: CryptoParams):
    """sum over the last axis of a * b, reduced mod q."""
    if params.fast:
        return _reduce(np.sum(a * b, axis=-1, dtype=np.uint64), params)
    return np.asarray(np.sum(a * b, axis=-1) % params.q, dtype=object)


# -- types ------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseBudget:
    """Bound on |error| and the plaintext gain; decryption is exact while 2 bound < gain."""

    bound: int
    gain: int

    def __post_init__(self):
        if self.bound < 0 or self.gain < 1:
            raise ValueError("invalid noise budget")

    @property
    def exact(self) -> bool:
        return 2 * self.bound < self.gain


@dataclass(frozen=True)
class SecretKey:
    k: np.ndarray
    params: CryptoParams

    def __post_init__(self):
        if self.k.shape != (self.params.n_key,):
            raise ValueError("key length must equal n_key")
        self.k.setflags(write=False)

    def row(self):
        """[1, -k'] mod q."""
        neg = _reduce(-self.k.astype(object) % self.params.q, self.params)
        one = np.array([1], dtype=self.params.dtype)
        return np.concatenate([one, neg])

    def __repr__(self) -> str:
        return f"SecretKey(n_key={self.params.n_key}, <hidden>)"


@dataclass(frozen=True)
class LweCiphertext:
    body: np.ndarray
    params: CryptoParams
    noise: NoiseBudget

    def __post_init__(self):
        if self.body.shape[-1:] != (self.params.dim,):
            raise ValueError(f"LWE body must end in {self.params.dim}, got {self.body.shape}")
        self.body.setflags(write=False)

    @property
    def shape(self) -> tuple:
        return self.body.shape[:-1]

    def __getitem__(self, idx) -> "LweCiphertext":
        b = np.asarray(self.body[idx])
        if b.ndim == 0 or b.shape[-1] != self.params.dim:
            raise IndexError("index must select whole ciphertexts")
        return LweCiphertext(b.copy(), self.params, self.noise)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)


@dataclass(frozen=True)
class GswCiphertext:
    """GSW multiplier(s).  ``mag`` holds public bounds on |m| per element, used only
    by the noise bookkeeping."""

    body: np.ndarray
    params: CryptoParams
    e_bound: int
    mag: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = self.params
        if self.body.shape[-2:] != (p.dim, p.digits_len):
            raise ValueError("GSW body has the wrong trailing shape")
        if np.shape(self.mag) != self.body.shape[:-2]:
            raise ValueError("mag must match the GSW batch shape")
        self.body.setflags(write=False)

    @property
    def shape(self) -> tuple:
        return self.body.shape[:-2]


@dataclass(frozen=True)
class DigitVector:
    """Digits of (a combination of) ciphertexts.

    ``l1`` bounds the per-ciphertext sum of |digit|; ``noise`` is the budget of
    the ciphertext the digits recompose to.
    """

    digits: np.ndarray
    params: CryptoParams
    noise: NoiseBudget
    l1: int

    def __sub__(self, other: "DigitVector") -> "DigitVector":
        _same(self.params, other.params)
        if self.digits.shape != other.digits.shape:
            raise ValueError("digit vectors differ in shape")
        if self.noise.gain != other.noise.gain:
            raise CryptoError("cannot combine digits of ciphertexts with different gains")
        return DigitVector(self.digits - other.digits, self.params,
                           NoiseBudget(self.noise.bound + other.noise.bound, self.noise.gain),
                           self.l1 + other.l1)


def _same(p1: CryptoParams, p2: CryptoParams):
    if p1.header() != p2.header():
        raise ValueError("ciphertexts use different parameters")


# -- basic operations -------------------------------------------------------------

def keygen(params: CryptoParams, rng: np.random.Generator | None = None) -> SecretKey:
    """Uniform key in Z_q^{n_key}; deterministic under ``params.seed`` when no rng is given."""
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    return SecretKey(_uniform(rng, (params.n_key,), params), params)


def encrypt(m, G: int, key: SecretKey, rng: np.random.Generator, e=None) -> LweCiphertext:
    """Enc(G m) = [G m + k'a + e, a] mod q for a centered integer (array) m.

    ``e`` forces the error term (scalar or array); otherwise it is uniform on
    [-e_max, e_max].
    """
    p = key.params
    G = int(G)
    if G < 1:
        raise ValueError("gain must be a positive integer")
    m = np.asarray(m, dtype=object)
    scaled = np.asarray(m * G, dtype=object)
    if scaled.size and max(abs(int(v)) for v in scaled.flat) * 2 >= p.q:
        raise PlaintextOverflow(f"|G m| reaches q/2 (G={G})")
    a = _uniform(rng, m.shape + (p.n_key,), p)
    if e is None:
        err = _errors(rng, m.shape, p)
        bound = p.e_max
    else:
        err = np.broadcast_to(np.asarray(e, dtype=object), m.shape)
        bound = max((abs(int(v)) for v in err.flat), default=0)
    b = _residues(scaled + np.asarray(err, dtype=object), p)
    b = _reduce(b + _dot_last(a, key.k, p), p)
    body = np.concatenate([np.asarray(b, dtype=p.dtype)[..., None], a], axis=-1)
    return LweCiphertext(body, p, NoiseBudget(int(bound), G))


def zero_ciphertext(params: CryptoParams, shape=(), gain: int = 1) -> LweCiphertext:
    return LweCiphertext(np.zeros(tuple(shape) + (params.dim,), dtype=params.dtype), params,
                         NoiseBudget(0, gain))


def _check_body(c: LweCiphertext, key: SecretKey):
    _same(c.params, key.params)
    if c.body.shape[-1] != key.params.dim:
        raise ValueError("ciphertext dimension does not match the key")


def decrypt(c: LweCiphertext, key: SecretKey):
    """[1, -k'] c mod q as centered integer(s)."""
    _check_body(c, key)
    res = _dot_last(c.body, key.row(), key.params)
    out = _centered(res, key.params)
    return int(out) if out.ndim == 0 else out


def _round_div(D, G: int):
    """Nearest integer of D / G for integer D when |D - G m| < G / 2."""
    D = np.asarray(D, dtype=object)
    return (D + G // 2) // G


def decrypt_scaled(c: LweCiphertext, G: int, key: SecretKey):
    """Exact plaintext round(Dec(c) / G); refuses when the tracked noise could flip the rounding."""
    G = int(G)
    if 2 * c.noise.bound >= G:
        raise NoiseBudgetExceeded(f"noise bound {c.noise.bound} too large for gain {G}")
    D = decrypt(c, key)
    out = _round_div(D, G)
    return int(out) if np.ndim(out) == 0 else out


def add(c1: LweCiphertext, c2: LweCiphertext) -> LweCiphertext:
    _same(c1.params, c2.params)
    if c1.body.shape != c2.body.shape:
        raise ValueError("ciphertext shapes differ")
    if c1.noise.gain != c2.noise.gain:
        raise CryptoError("cannot add ciphertexts with different gains")
    body = _reduce(c1.body + c2.body, c1.params)
    return LweCiphertext(body, c1.params, NoiseBudget(c1.noise.bound + c2.noise.bound,
                                                      c1.noise.gain))


def sub(c1: LweCiphertext, c2: LweCiphertext) -> LweCiphertext:
    return add(c1, scalar_mul(-1, c2))


def scalar_mul(k: int, c: LweCiphertext) -> LweCiphertext:
    """k c mod q; the plaintext scales by the centered value of k."""
    p = c.params
    kc = int(k) % p.q
    kc_centered = kc - p.q if kc >= p.q // 2 else kc
    if p.fast:
        body = _reduce(c.body * np.uint64(kc), p)
    else:
        body = (c.body * kc) % p.q
    return LweCiphertext(body, p, NoiseBudget(abs(kc_centered) * c.noise.bound, c.noise.gain))


# -- decomposition -----------------------------------------------------------------

def gadget_matrix(params: CryptoParams) -> np.ndarray:
    """H = [I, omega I, ..., omega^{d-1} I] as residues."""
    n1 = params.dim
    blocks = [np.eye(n1, dtype=object) * pow(params.omega, j, params.q) for j in range(params.d)]
    return _reduce(np.hstack(blocks), params)


def _decompose_body(body, params: CryptoParams) -> np.ndarray:
    w, d = params.omega, params.d
    if params.fast and w & (w - 1) == 0:
        shift = w.bit_length() - 1
        shifts = np.arange(d, dtype=np.uint64) * np.uint64(shift)
        digs = (body[..., None, :] >> shifts[:, None]) & np.uint64(w - 1)
        digs = digs.astype(np.int64)
    else:
        rest = np.asarray(body, dtype=object)
        out = []
        for _ in range(d):
            out.append(rest % w)
            rest = rest // w
        digs = np.stack(out, axis=-2).astype(np.int64)
    return digs.reshape(body.shape[:-1] + (d * params.dim,))


def decompose(c: LweCiphertext) -> DigitVector:
    p = c.params
    return DigitVector(_decompose_body(c.body, p), p, c.noise, (p.omega - 1) * p.digits_len)


def recompose(dv: DigitVector) -> LweCiphertext:
    """H D(c) mod q (exact inverse of ``decompose``)."""
    p = dv.params
    digs = np.asarray(dv.digits).reshape(dv.digits.shape[:-1] + (p.d, p.dim)).astype(object)
    weights = np.array([pow(p.omega, j, p.q) for j in range(p.d)], dtype=object)
    body = np.tensordot(digs, weights, axes=([-2], [0])) if digs.ndim > 2 else weights @ digs
    body = np.asarray(body, dtype=object) % p.q
    return LweCiphertext(_reduce(body.astype(object), p) if p.fast else body, p, dv.noise)


# -- GSW -----------------------------------------------------------------------------

def encrypt_gsw(m, key: SecretKey, rng: np.random.Generator, zero_error: bool = False,
                mag=None) -> GswCiphertext:
    """Enc'(m) = m H + [k'A + e; A] mod q for centered integer(s) m."""
    p = key.params
    m = np.asarray(m, dtype=object)
    absm = np.asarray(np.abs(m), dtype=object)
    if m.size and int(absm.max()) * 2 >= p.q:
        raise PlaintextOverflow("|m| reaches q/2")
    D = p.digits_len
    A = _uniform(rng, m.shape + (p.n_key, D), p)
    if zero_error or p.e_max == 0:
        e = np.zeros(m.shape + (D,), dtype=np.int64)
    else:
        e = _errors(rng, m.shape + (D,), p)
    top = _residues(np.asarray(e, dtype=object), p)
    kA = np.sum(A * key.k[:, None], axis=-2, dtype=p.dtype if p.fast else object)
    top = _reduce(top + _reduce(kA, p), p)
    mask = np.concatenate([np.asarray(top, dtype=p.dtype)[..., None, :], A], axis=-2)
    H = gadget_matrix(p)
    mres = _residues(m, p)
    if p.fast:
        body = _reduce(np.asarray(mres, dtype=np.uint64)[..., None, None] * H.astype(np.uint64)
                       + mask, p)
    else:
        body = (mres[..., None, None] * H + mask) % p.q
    magnitude = absm if mag is None else np.asarray(mag, dtype=object)
    return GswCiphertext(body, p, 0 if zero_error else p.e_max, magnitude)


def _matvec(M, v, params: CryptoParams):
    """M (..., a, D) times digit vector v (..., D) -> (..., a) mod q."""
    if params.fast:
        vv = np.asarray(v).astype(np.uint64)   # negative digits wrap, which is exact mod 2^64
        out = np.matmul(M, vv[..., None])[..., 0]
        return _reduce(out, params)
    vv = np.asarray(v, dtype=object)
    out = np.matmul(M, vv[..., None])[..., 0]
    return out % params.q


def external_product(M: GswCiphertext, c: LweCiphertext | DigitVector) -> LweCiphertext:
    """Enc'(m1) * D(c): decrypts to m1 Dec(c) + e' D(c)."""
    dv = c if isinstance(c, DigitVector) else decompose(c)
    _same(M.params, dv.params)
    if M.body.shape[:-2] != dv.digits.shape[:-1] and M.body.ndim != 2:
        raise ValueError("batch shapes of the multiplier and the ciphertext differ")
    body = _matvec(M.body, dv.digits, M.params)
    mag = int(np.max(M.mag)) if np.size(M.mag) else 0
    bound = mag * dv.noise.bound + M.e_bound * dv.l1
    return LweCiphertext(body, M.params, NoiseBudget(bound, dv.noise.gain))


def encrypt_vector(v, G: int, key: SecretKey, rng: np.random.Generator, e=None) -> LweCiphertext:
    """Element-wise encryption of an integer vector; body shape (len(v), n_key+1)."""
    return encrypt(np.asarray(v, dtype=object).reshape(-1), G, key, rng, e)


def encrypt_gsw_matrix(M, key: SecretKey, rng: np.random.Generator,
                       zero_error: bool = False) -> GswCiphertext:
    """Element-wise GSW encryption of an integer matrix; body shape (r, c, n+1, D)."""
    M = np.asarray(M, dtype=object)
    if M.ndim != 2:
        raise ValueError("expected an integer matrix")
    return encrypt_gsw(M, key, rng, zero_error)


def gsw_matvec(M: GswCiphertext, x: LweCiphertext | DigitVector) -> LweCiphertext:
    """Encrypted matrix times the digits of an encrypted vector: sum_j M_ij D(x_j)."""
    dv = x if isinstance(x, DigitVector) else decompose(x)
    _same(M.params, dv.params)
    p = M.params
    if M.body.ndim != 4:
        raise ValueError("gsw_matvec expects a matrix of GSW ciphertexts")
    r, c = M.body.shape[:2]
    if dv.digits.shape != (c, p.digits_len):
        raise ValueError(f"vector of {dv.digits.shape[0]} ciphertexts, matrix has {c} columns")
    big = np.moveaxis(M.body, 1, 2).reshape(r, p.dim, c * p.digits_len)
    body = _matvec(big, dv.digits.reshape(-1), p)
    mags = np.asarray(M.mag, dtype=object)
    row_mag = max((sum(int(v) for v in mags[i]) for i in range(r)), default=0)
    bound = row_mag * dv.noise.bound + M.e_bound * dv.l1 * c
    return LweCiphertext(body, p, NoiseBudget(bound, dv.noise.gain))


# -- serialization --------------------------------------------------------------------

_MAGIC = b"LWEC"
_KIND = {"lwe": 0, "gsw": 1}


def serialize(c: LweCiphertext | GswCiphertext) -> bytes:
    """Little-endian fixed-width residues behind a header {q, n_key, omega, d, shape}.

    Noise metadata is not part of the wire format.
    """
    p = c.params
    kind = "gsw" if isinstance(c, GswCiphertext) else "lwe"
    w = p.width
    head = _MAGIC + struct.pack("<BBH", 1, _KIND[kind], w)
    head += int(p.q).to_bytes(w + 1, "little")
    head += struct.pack("<III", p.n_key, p.omega, p.d)
    shape = c.body.shape
    head += struct.pack("<I", len(shape)) + struct.pack(f"<{len(shape)}I", *shape)
    flat = c.body.reshape(-1)
    if p.fast and w == 8:
        payload = flat.astype("<u8").tobytes()
    else:
        payload = b"".join(int(v).to_bytes(w, "little") for v in flat)
    return head + payload


def deserialize(data: bytes, noise: NoiseBudget | None = None):
    """Inverse of ``serialize``.  Returns (ciphertext, params)."""
    if data[:4] != _MAGIC:
        raise CryptoError("not a serialized ciphertext")
    try:
        version, kind, w = struct.unpack_from("<BBH", data, 4)
        if version != 1:
            raise CryptoError(f"unsupported version {version}")
        off = 8
        q = int.from_bytes(data[off:off + w + 1], "little")
        off += w + 1
        n_key, omega, d = struct.unpack_from("<III", data, off)
        off += 12
        (nd,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{nd}I", data, off)
        off += 4 * nd
    except struct.error as exc:
        raise CryptoError(f"truncated header: {exc}") from exc
    p = CryptoParams(q=q, n_key=n_key, omega=omega, d=d)
    if p.width != w:
        raise CryptoError("residue width does not match q")
    count = int(np.prod(shape)) if shape else 1
    payload = data[off:]
    if len(payload) != count * w:
        raise CryptoError("payload length does not match the header")
    if p.fast and w == 8:
        flat = np.frombuffer(payload, dtype="<u8").astype(np.uint64)
    else:
        flat = np.array([int.from_bytes(payload[i * w:(i + 1) * w], "little")
                         for i in range(count)], dtype=object)
        if flat.size and max(flat) >= q:
            raise CryptoError("residue out of range")
        if p.fast:
            flat = flat.astype(np.uint64)
    body = flat.reshape(shape)
    nb = noise or NoiseBudget(0, 1)
    if kind == _KIND["lwe"]:
        return LweCiphertext(body, p, nb), p
    if kind == _KIND["gsw"]:
        return GswCiphertext(body, p, nb.bound, np.zeros(shape[:-2], dtype=object)), p
    raise CryptoError(f"unknown ciphertext kind {kind}")


def to_text(c) -> str:
    return base64.b64encode(serialize(c)).decode("ascii")


def from_text(s: str, noise: NoiseBudget | None = None):
    try:
        raw = base64.b64decode(s.encode("ascii"), validate=True)
    except (ValueError, UnicodeError) as exc:
        raise CryptoError(f"invalid base64 ciphertext: {exc}") from exc
    return deserialize(raw, noise)
