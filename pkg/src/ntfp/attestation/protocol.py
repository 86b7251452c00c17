"""
Wire format shared by verifier and prover.

A frame is ``u32 length (LE) | u8 type | payload`` where ``length`` counts
the type byte plus the payload. Payloads:

    HELLO      empty
    ID         prover id, UTF-8
    PREPARE    empty (prover power-cycles its fingerprint zone)
    READY      empty
    CHALLENGE  16-byte nonce | u32 addr (LE) | u32 leng (LE)
    RESPONSE   16-byte CMAC tag
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from ..errors import ProtocolError

LENGTH = struct.Struct("<I")
CHALLENGE_WINDOW = struct.Struct("<II")
NONCE_BYTES = 16
MAX_FRAME = 1 << 20


class MsgType(enum.IntEnum):
    HELLO = 1
    ID = 2
    PREPARE = 3
    READY = 4
    CHALLENGE = 5
    RESPONSE = 6


@dataclass(frozen=True)
class Message:
    type: MsgType
    payload: bytes = b""

    def encode(self) -> bytes:
        return LENGTH.pack(len(self.payload) + 1) + bytes([self.type]) + self.payload


def encode(msg_type: MsgType, payload: bytes = b"") -> bytes:
    return Message(MsgType(msg_type), bytes(payload)).encode()


def decode(frame: bytes) -> Message:
    """Decode exactly one complete frame."""
    if len(frame) < LENGTH.size + 1:
        raise ProtocolError("frame shorter than its header")
    (length,) = LENGTH.unpack_from(frame)
    if length < 1 or length > MAX_FRAME:
        raise ProtocolError(f"frame length {length} out of range")
    if len(frame) != LENGTH.size + length:
        raise ProtocolError(f"frame declares {length} bytes after the prefix, has {len(frame) - LENGTH.size}")
    return decode_body(frame[LENGTH.size:])


def decode_body(body: bytes) -> Message:
    try:
        msg_type = MsgType(body[0])
    except ValueError:
        raise ProtocolError(f"unknown message type {body[0]}") from None
    return Message(msg_type, bytes(body[1:]))


class FrameBuffer:
    """Reassembles frames from an arbitrary split of a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message]:
        self._buf += data
        out = []
        while len(self._buf) >= LENGTH.size:
            (length,) = LENGTH.unpack_from(self._buf)
            if length < 1 or length > MAX_FRAME:
                raise ProtocolError(f"frame length {length} out of range")
            end = LENGTH.size + length
            if len(self._buf) < end:
                break
            out.append(decode_body(bytes(self._buf[LENGTH.size:end])))
            del self._buf[:end]
        return out


def challenge_payload(nonce: bytes, addr: int, leng: int) -> bytes:
    if len(nonce) != NONCE_BYTES:
        raise ProtocolError(f"nonce must be {NONCE_BYTES} bytes")
    return bytes(nonce) + CHALLENGE_WINDOW.pack(addr, leng)


def parse_challenge(payload: bytes) -> tuple[bytes, int, int]:
    if len(payload) != NONCE_BYTES + CHALLENGE_WINDOW.size:
        raise ProtocolError("malformed CHALLENGE payload")
    addr, leng = CHALLENGE_WINDOW.unpack_from(payload, NONCE_BYTES)
    return payload[:NONCE_BYTES], addr, leng


def expect(msg: Message, msg_type: MsgType) -> Message:
    if msg.type is not msg_type:
        raise ProtocolError(f"expected {msg_type.name}, got {msg.type.name}")
    return msg
