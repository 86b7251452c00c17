from .protocol import FrameBuffer, Message, MsgType, decode, encode
from .prover import SimProver, default_firmware
from .transport import LoopbackTransport, ProverServer, SocketTransport, Transport
from .verifier import AttestationSession, EnrollmentRecord, Verdict, Verifier, VerifierDB

__all__ = [
    "AttestationSession", "EnrollmentRecord", "FrameBuffer", "LoopbackTransport", "Message", "MsgType",
    "ProverServer", "SimProver", "SocketTransport", "Transport", "Verdict", "Verifier", "VerifierDB",
    "decode", "default_firmware", "encode",
]
