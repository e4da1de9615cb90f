"""Offline verification of a protocol transcript.

Stage 1 (keyless): re-run the controller step on every recorded (y, chi) pair
with the recorded encrypted matrices and require byte-identical (u, chi').
This needs nothing the controller does not already see.

Stage 2 (full rerun): repeat the whole closed-loop run from the run settings
in the transcript header (optionally with another seed) and require a
byte-identical transcript.
"""
from __future__ import annotations

from dataclasses import dataclass

from .. import crypto
from ..controller import (
    RECORD_FIELDS,
    EncryptedControllerState,
    TranscriptError,
    controller_step,
    read_transcript,
)
from ..crypto import CryptoError, CryptoParams, GswCiphertext, LweCiphertext
from ..plant import run_closed_loop
from ..quantizer import GainSchedule
from .plants import resolve_plant

__all__ = ["ReplayVerdict", "replay", "HEADER_KEYS"]

# everything the controller side may legitimately see besides ciphertexts
HEADER_KEYS = {"format", "params", "matrices", "plant", "h", "lam", "schedule", "horizon", "x0",
               "chi0", "substeps", "seed", "crypto", "crypto_gain"}


@dataclass
class ReplayVerdict:
    ok: bool
    stage: str
    index: int | None = None
    message: str = ""
    records: int = 0

    def __str__(self) -> str:
        state = "PASS" if self.ok else "FAIL"
        where = "" if self.index is None else f" at record {self.index}"
        return f"{state} [{self.stage}]{where}: {self.message}"


def _load(text: str, kind, where: str):
    try:
        c, _ = crypto.from_text(text)
    except CryptoError as exc:
        raise TranscriptError(f"{where}: {exc}") from None
    if not isinstance(c, kind):
        raise TranscriptError(f"{where}: expected {kind.__name__}")
    return c


def replay(path, seed: int | None = None, rerun: bool = True) -> ReplayVerdict:
    try:
        head, records = read_transcript(path)
    except (OSError, TranscriptError) as exc:
        return ReplayVerdict(False, "read", None, str(exc))
    extra = set(head) - HEADER_KEYS
    if extra:
        return ReplayVerdict(False, "confinement", None,
                             f"header carries non-public fields: {sorted(extra)}")
    try:
        mats = {name: _load(text, GswCiphertext, f"matrix {name}")
                for name, text in head["matrices"].items()}
        state = EncryptedControllerState(**mats)
    except (TranscriptError, TypeError, KeyError) as exc:
        return ReplayVerdict(False, "confinement", None, f"bad encrypted matrices: {exc}")
    for i, rec in enumerate(records):
        if rec["k"] != i:
            return ReplayVerdict(False, "keyless", i, f"record index {rec['k']} out of order")
        try:
            c = {f: _load(rec[f], LweCiphertext, f"record {i} field {f}") for f in RECORD_FIELDS}
            u, chi_prime = controller_step(state, c["y"], c["chi"])
        except (TranscriptError, ValueError) as exc:
            return ReplayVerdict(False, "keyless", i, str(exc))
        if crypto.to_text(u) != rec["u"]:
            return ReplayVerdict(False, "keyless", i, "recomputed u differs from the record")
        if crypto.to_text(chi_prime) != rec["chi_prime"]:
            return ReplayVerdict(False, "keyless", i, "recomputed chi' differs from the record")
    if not rerun:
        return ReplayVerdict(True, "keyless", None, "controller outputs reproduced",
                             len(records))
    try:
        cr = resolve_plant(head["plant"])
        cc = head["crypto"]
        run_seed = head["seed"] if seed is None else seed
        params = CryptoParams.with_bits(cc["bits"], cc["n_key"], e_max=cc["e_max"],
                                        seed=run_seed, omega=cc["omega"])
        fresh: list = []
        trace = run_closed_loop(cr, head["h"], head["lam"], GainSchedule.from_dict(head["schedule"]),
                                "encrypted", horizon=head["horizon"], x0=head["x0"],
                                chi0=head["chi0"], substeps=head["substeps"], crypto_params=params,
                                seed=run_seed, transcript=fresh)
    except (KeyError, TypeError) as exc:
        return ReplayVerdict(False, "rerun", None, f"header lacks run settings: {exc}")
    new_mats = {name: crypto.to_text(M) for name, M in trace.info["setup"].matrices().items()}
    if new_mats != head["matrices"]:
        return ReplayVerdict(False, "rerun", None, "encrypted matrices differ from the rerun")
    if len(fresh) != len(records):
        return ReplayVerdict(False, "rerun", None,
                             f"rerun produced {len(fresh)} records, transcript has {len(records)}")
    for i, (old, new) in enumerate(zip(records, fresh)):
        for f in RECORD_FIELDS:
            if crypto.to_text(new[f]) != old[f]:
                return ReplayVerdict(False, "rerun", i, f"field {f} differs from the rerun")
    return ReplayVerdict(True, "rerun", None, "transcript reproduced bit for bit", len(records))
