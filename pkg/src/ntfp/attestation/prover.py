"""Simulated prover device: a fingerprint memory zone plus an application region."""
from __future__ import annotations

import threading

import numpy as np

from ..chipsim import SimChip, new_chip, remeasure
from ..core import FingerprintMask, MemorySnapshot, bits_to_bytes, regenerate
from ..crypto import cmac
from ..errors import InvalidArgument, ProtocolError
from .protocol import Message, MsgType, encode, parse_challenge

FINGERPRINT_ZONE_BYTES = 48 * 1024
APP_REGION_BYTES = 16 * 1024
KEY_BITS = 128


class SimProver:
    """Device model answering protocol messages.

    Memory map: the fingerprint zone occupies ``[0, zone_bytes)`` and the
    application firmware sits directly after it. A power cycle replaces the
    zone contents with a fresh noisy read of the underlying simulated chip.
    """

    def __init__(self, prover_id: str, firmware: bytes, ber_f: float = 0.0, seed: int = 0,
                 zone_bytes: int = FINGERPRINT_ZONE_BYTES, chip: SimChip | None = None):
        if not prover_id:
            raise InvalidArgument("prover id must be non-empty")
        self.prover_id = prover_id
        self.zone_addr = 0
        self.zone_bytes = zone_bytes
        self.app_addr = zone_bytes
        self.firmware = bytearray(firmware)
        self.chip = chip or new_chip(zone_bytes * 8, ber_f, seed, chip_id=prover_id)
        if self.chip.size_bits != zone_bytes * 8:
            raise InvalidArgument("chip size must match the fingerprint zone")
        self._zone = self.chip.enrollment
        self._cycles = 0
        self._mask: FingerprintMask | None = None
        self._key: bytes | None = None
        self.online = True
        self._lock = threading.Lock()

    @property
    def app_bytes(self) -> int:
        return len(self.firmware)

    @property
    def mask(self) -> FingerprintMask | None:
        return self._mask

    def read_fingerprint_zone(self) -> MemorySnapshot:
        """Trusted-environment readout of the power-up image used for enrollment."""
        return self.chip.enrollment

    def install_mask(self, mask: FingerprintMask) -> None:
        if self._mask is not None:
            raise ProtocolError("mask already installed; it is write-once")
        self._mask = mask

    def power_cycle(self) -> None:
        self._cycles += 1
        self._zone = remeasure(self.chip, self._cycles)
        self._key = None

    def tamper(self, offset: int, xor: int = 0xFF) -> None:
        """Flip bits of one application byte (offset relative to the region start)."""
        self.firmware[offset] ^= xor

    def read(self, addr: int, leng: int) -> bytes:
        start = addr - self.app_addr
        if start < 0 or leng < 0 or start + leng > len(self.firmware):
            raise ProtocolError(f"window [{addr}, {addr + leng}) is outside the application region")
        return bytes(self.firmware[start:start + leng])

    def _regenerated_key(self) -> bytes:
        if self._mask is None:
            raise ProtocolError("prover has no mask installed")
        if self._key is None:
            fp = regenerate(self._zone, self._mask)
            self._key = bits_to_bytes(fp.bits[:KEY_BITS])
        return self._key

    def handle(self, msg: Message) -> list[bytes]:
        """Process one inbound message and return the outbound frames."""
        if not self.online:
            return []
        with self._lock:
            if msg.type is MsgType.HELLO:
                return [encode(MsgType.ID, self.prover_id.encode("utf-8"))]
            if msg.type is MsgType.PREPARE:
                self.power_cycle()
                self._regenerated_key()
                return [encode(MsgType.READY)]
            if msg.type is MsgType.CHALLENGE:
                chal, addr, leng = parse_challenge(msg.payload)
                resp = cmac(self._regenerated_key(), self.read(addr, leng) + chal)
                return [encode(MsgType.RESPONSE, resp)]
            raise ProtocolError(f"prover cannot handle {msg.type.name}")


def default_firmware(size: int = APP_REGION_BYTES, seed: int = 7) -> bytes:
    """Deterministic stand-in application image."""
    return np.random.Generator(np.random.PCG64(seed)).integers(0, 256, size, dtype=np.uint8).tobytes()
