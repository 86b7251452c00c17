"""Verifier side: enrollment database and the attestation state machine."""
from __future__ import annotations

import enum
import hashlib
import json
import os
import secrets
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from ..core import Fingerprint, TransformParams, bits_to_bytes, bits_to_str
from ..crypto import cmac, tags_equal
from ..errors import EnrollmentConflict, InvalidArgument, ProtocolError, TransportTimeout
from ..keymask import derive_key, write_mask
from .protocol import NONCE_BYTES, MsgType, challenge_payload, encode, expect
from .transport import Transport

DEFAULT_PARAMS = TransformParams.dnorm(32, 16, 16)
KEY_BITS = 128


@dataclass(frozen=True)
class EnrollmentRecord:
    prover_id: str
    fingerprint: Fingerprint
    mask_digest: str

    def to_json(self) -> str:
        return json.dumps({"prover_id": self.prover_id, "k": self.fingerprint.k,
                           "fingerprint": bits_to_str(self.fingerprint.bits),
                           "mask_digest": self.mask_digest})

    @classmethod
    def from_json(cls, line: str) -> "EnrollmentRecord":
        d = json.loads(line)
        fp = Fingerprint(d["fingerprint"])
        if fp.k != d["k"]:
            raise ProtocolError(f"corrupt record for {d['prover_id']!r}")
        return cls(d["prover_id"], fp, d["mask_digest"])


class VerifierDB:
    """Append-only JSON-lines store of enrollment records.

    With a path, every insert is appended and flushed; reopening the file
    restores the same records. Without one the store lives in memory.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._records: dict[str, EnrollmentRecord] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = EnrollmentRecord.from_json(line)
                    self._records[rec.prover_id] = rec

    def __contains__(self, prover_id: str) -> bool:
        return prover_id in self._records

    def __len__(self):
        return len(self._records)

    def get(self, prover_id: str) -> EnrollmentRecord | None:
        return self._records.get(prover_id)

    def insert(self, rec: EnrollmentRecord) -> None:
        with self._lock:
            if rec.prover_id in self._records:
                raise EnrollmentConflict(f"prover {rec.prover_id!r} is already enrolled")
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(rec.to_json() + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            self._records[rec.prover_id] = rec


class Verdict(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    ABORTED = "aborted"


@dataclass
class AttestationSession:
    prover_id: str
    addr: int
    leng: int
    chal: bytes | None = None
    resp: bytes | None = None
    expected: bytes | None = None
    verdict: Verdict = Verdict.ABORTED
    reason: str = ""

    def to_record(self) -> dict:
        return {"prover_id": self.prover_id, "addr": self.addr, "leng": self.leng,
                "chal": self.chal.hex() if self.chal else None,
                "resp": self.resp.hex() if self.resp else None,
                "expected": self.expected.hex() if self.expected else None,
                "verdict": self.verdict.value, "reason": self.reason}


class Verifier:
    """Holds the enrollment DB and the golden firmware image.

    ``golden`` is the trusted application image; ``app_addr`` is where it is
    mapped on the provers, so attested windows are read from the same
    addresses on both sides.
    """

    def __init__(self, db: VerifierDB, golden: bytes, app_addr: int,
                 nonce_source: Callable[[int], bytes] = secrets.token_bytes):
        self.db = db
        self.golden = bytes(golden)
        self.app_addr = app_addr
        self._nonce = nonce_source

    def enroll(self, prover, params: TransformParams = DEFAULT_PARAMS, k: int = KEY_BITS) -> EnrollmentRecord:
        """Trusted one-time enrollment: read the zone, derive key and mask, install the mask."""
        if prover.prover_id in self.db:
            raise EnrollmentConflict(f"prover {prover.prover_id!r} is already enrolled")
        key, mask = derive_key(prover.read_fingerprint_zone(), params, k)
        digest = hashlib.sha256(write_mask(mask)).hexdigest()
        rec = EnrollmentRecord(prover.prover_id, Fingerprint(key.bits), digest)
        self.db.insert(rec)
        prover.install_mask(mask)
        return rec

    def provision(self, prover, key, mask) -> EnrollmentRecord:
        """Register a key and mask produced elsewhere (e.g. by ``ntfp extract``)."""
        if prover.prover_id in self.db:
            raise EnrollmentConflict(f"prover {prover.prover_id!r} is already enrolled")
        if key.k < KEY_BITS or len(mask) < KEY_BITS:
            raise InvalidArgument(f"need at least {KEY_BITS} key bits and mask entries")
        rec = EnrollmentRecord(prover.prover_id, Fingerprint(key.bits), hashlib.sha256(write_mask(mask)).hexdigest())
        self.db.insert(rec)
        prover.install_mask(mask)
        return rec

    def golden_window(self, addr: int, leng: int) -> bytes:
        start = addr - self.app_addr
        if start < 0 or leng < 0 or start + leng > len(self.golden):
            raise InvalidArgument(f"window [{addr}, {addr + leng}) is outside the golden image")
        return self.golden[start:start + leng]

    def attest(self, transport: Transport, prover_id: str, addr: int, leng: int,
               timeout: float | None = None) -> AttestationSession:
        session = AttestationSession(prover_id, addr, leng)
        rec = self.db.get(prover_id)
        if rec is None:
            session.reason = "unknown prover id"
            return session
        try:
            bin_golden = self.golden_window(addr, leng)
            transport.send(encode(MsgType.HELLO))
            ident = expect(transport.recv(timeout), MsgType.ID).payload.decode("utf-8", "replace")
            if ident != prover_id or ident not in self.db:
                session.reason = f"prover identified as {ident!r}"
                return session
            transport.send(encode(MsgType.PREPARE))
            expect(transport.recv(timeout), MsgType.READY)
            session.chal = self._nonce(NONCE_BYTES)
            transport.send(encode(MsgType.CHALLENGE, challenge_payload(session.chal, addr, leng)))
            session.resp = expect(transport.recv(timeout), MsgType.RESPONSE).payload
        except TransportTimeout:
            session.reason = "transport timeout"
            return session
        except (ProtocolError, InvalidArgument) as exc:
            session.reason = str(exc)
            return session
        session.expected = cmac(bits_to_bytes(rec.fingerprint.bits[:KEY_BITS]), bin_golden + session.chal)
        ok = tags_equal(session.expected, session.resp)
        session.verdict = Verdict.ACCEPTED if ok else Verdict.REJECTED
        session.reason = "" if ok else "response mismatch"
        return session
