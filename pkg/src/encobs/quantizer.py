"""Uniform quantization and gain schedules.

Rounding is half-away-from-zero everywhere; the integer encoder and the
real-valued quantizer share ``round_half_away`` so that ciphertext and
plaintext controllers round identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "round_half_away",
    "quantize",
    "encode_integer",
    "error_bound",
    "GainSchedule",
    "QuantizerOverflow",
]


class QuantizerOverflow(OverflowError):
    pass


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _check_gain(theta) -> float:
    theta = float(theta)
    if not theta > 0 or not math.isfinite(theta):
        raise ValueError(f"quantization gain must be positive and finite, got {theta}")
    return theta


def quantize(x, theta):
    """Q_theta(x) = round(theta * x) / theta, element-wise."""
    theta = _check_gain(theta)
    return round_half_away(theta * np.asarray(x, dtype=float)) / theta


def encode_integer(x, theta, limit: int | None = None) -> np.ndarray:
    """Integer codes round(theta * x) as an object array of Python ints.

    ``limit`` is an exclusive bound on the code magnitude (typically q/2
    divided by the encryption gain); exceeding it raises QuantizerOverflow.
    """
    theta = _check_gain(theta)
    scaled = round_half_away(theta * np.asarray(x, dtype=float))
    if not np.all(np.isfinite(scaled)):
        raise QuantizerOverflow("non-finite value cannot be encoded")
    codes = np.frompyfunc(int, 1, 1)(scaled)
    codes = np.asarray(codes, dtype=object).reshape(scaled.shape)
    if limit is not None and codes.size and max(abs(int(c)) for c in codes.flat) >= limit:
        raise QuantizerOverflow(f"encoded magnitude reaches the limit {limit}")
    return codes


def error_bound(rows: int, cols: int, theta) -> float:
    """Frobenius bound sqrt(rows*cols) / (2 theta) on the quantization error."""
    if rows < 1 or cols < 1:
        raise ValueError("dimensions must be positive")
    return math.sqrt(rows * cols) / (2.0 * _check_gain(theta))


@dataclass(frozen=True)
class GainSchedule:
    """Sample-indexed gains Lambda_k.

    kind is ``"fixed"`` (Lambda_k = value), ``"power"`` (Lambda_k = k**p with
    Lambda_0 = 1) or ``"explicit"`` (a finite list; indexing past the end
    raises IndexError).  ``cap`` optionally saturates the gain.
    """

    kind: str = "fixed"
    value: float = 1.0
    p: float = 1.0
    values: tuple = field(default_factory=tuple)
    cap: float | None = None

    def __post_init__(self):
        if self.kind not in ("fixed", "power", "explicit"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "fixed" and not self.value > 0:
            raise ValueError("fixed gain must be positive")
        if self.kind == "power" and not self.p > 0:
            raise ValueError("power exponent must be positive")
        if self.kind == "explicit":
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if not self.values or min(self.values) <= 0:
                raise ValueError("explicit schedule needs positive gains")
        if self.cap is not None and not self.cap > 0:
            raise ValueError("cap must be positive")

    @classmethod
    def fixed(cls, value: float, cap: float | None = None) -> "GainSchedule":
        return cls(kind="fixed", value=float(value), cap=cap)

    @classmethod
    def power(cls, p: float, cap: float | None = None) -> "GainSchedule":
        return cls(kind="power", p=float(p), cap=cap)

    @classmethod
    def explicit(cls, values, cap: float | None = None) -> "GainSchedule":
        return cls(kind="explicit", values=tuple(values), cap=cap)

    def __call__(self, k: int) -> float:
        if k < 0:
            raise IndexError("sample index must be non-negative")
        if self.kind == "fixed":
            g = self.value
        elif self.kind == "power":
            g = 1.0 if k == 0 else float(k) ** self.p
        else:
            g = self.values[k]
        if self.cap is not None:
            g = min(g, self.cap)
        return g

    def label(self) -> str:
        if self.kind == "fixed":
            return f"fixed({self.value:g})"
        if self.kind == "power":
            return f"k^{self.p:g}"
        return f"explicit[{len(self.values)}]"

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "fixed":
            out["value"] = self.value
        elif self.kind == "power":
            out["p"] = self.p
        else:
            out["values"] = list(self.values)
        if self.cap is not None:
            out["cap"] = self.cap
        return out

    @classmethod
    def from_dict(cls, d) -> "GainSchedule":
        if isinstance(d, (int, float)):
            return cls.fixed(d)
        if isinstance(d, str):
            # "k^2", "k^0.4", "30"
            s = d.replace(" ", "")
            if s.startswith("k^"):
                return cls.power(float(s[2:]))
            if s == "k":
                return cls.power(1.0)
            return cls.fixed(float(s))
        kind = d.get("kind", "fixed")
        cap = d.get("cap")
        if kind == "fixed":
            return cls.fixed(d["value"], cap)
        if kind == "power":
            return cls.power(d["p"], cap)
        if kind == "explicit":
            return cls.explicit(d["values"], cap)
        raise ValueError(f"unknown schedule kind {kind!r}")
