"""Noise-tolerant fingerprint bits from noisy memory images."""
from .core import (Fingerprint, FingerprintMask, MemorySnapshot, Method, TransformParams, dnorm_enroll, enroll,
                   fhd, l1_norm, regenerate, snorm_enroll, uniformity)

__version__ = "0.1.0"

__all__ = [
    "Fingerprint", "FingerprintMask", "MemorySnapshot", "Method", "TransformParams", "dnorm_enroll", "enroll",
    "fhd", "l1_norm", "regenerate", "snorm_enroll", "uniformity",
]
