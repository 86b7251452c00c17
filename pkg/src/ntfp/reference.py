"""Published reference rows used by the CLI table renderer and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass

# worst-case raw bit error rate per chip family
WORST_BER = {
    "NORDIC": 0.0609,
    "ISSI": 0.0587,
    "IDT": 0.0542,
    "CY": 0.0688,
    "Winbond": 0.1626,
    "Microchip": 0.1637,
}


@dataclass(frozen=True)
class EfficiencyRow:
    method: str
    n: int
    m: int
    theta: int
    measured: float
    predicted: float


EFFICIENCY_ROWS = (
    EfficiencyRow("snorm", 31, 1, 12, 0.599, 0.0012),
    EfficiencyRow("snorm", 39, 1, 13, 0.0742, 0.0029),
    EfficiencyRow("snorm", 47, 1, 14, 0.0247, 0.0043),
    EfficiencyRow("dnorm", 16, 64, 13, 1.053, 0.0370),
    EfficiencyRow("dnorm", 16, 128, 13, 1.008, 0.0645),
    EfficiencyRow("dnorm", 16, 256, 13, 0.799, 0.1055),
    EfficiencyRow("dnorm", 32, 16, 16, 5.583, 0.1242),
    EfficiencyRow("dnorm", 32, 32, 16, 4.013, 0.2234),
    EfficiencyRow("dnorm", 32, 64, 16, 2.600, 0.3529),
    EfficiencyRow("dnorm", 32, 128, 16, 1.560, 0.4719),
    EfficiencyRow("dnorm", 32, 256, 16, 0.9091, 0.5170),
    EfficiencyRow("dnorm", 64, 32, 21, 0.4922, 0.3036),
    EfficiencyRow("dnorm", 64, 64, 21, 0.5807, 0.4291),
    EfficiencyRow("dnorm", 64, 128, 21, 0.5794, 0.4841),
)


@dataclass(frozen=True)
class LowestFailureRow:
    chip: str
    ber_f: float
    memory_kib: float
    n: int
    m: int
    theta: int
    p_key_fail: float
    selected_bits: int


LOWEST_FAILURE_ROWS = (
    LowestFailureRow("NORDIC", 0.0609, 64, 32, 16, 18, 3.486e-13, 148),
    LowestFailureRow("ISSI", 0.0587, 256, 128, 32, 44, 8.830e-17, 149),
    LowestFailureRow("IDT", 0.0542, 512, 128, 32, 42, 1.180e-16, 354),
    LowestFailureRow("CY", 0.0688, 512, 128, 128, 36, 4.540e-10, 141),
    LowestFailureRow("Winbond", 0.1626, 256 * 1024, 64, 64, 36, 6.580e-6, 3827),
    LowestFailureRow("Microchip", 0.1637, 32, 16, 128, 20, 1.468e-2, 133),
)


@dataclass(frozen=True)
class MinMemoryRow:
    chip: str
    ber_f: float
    n: int
    m: int
    theta: int
    ber_F: float
    p_key_fail: float
    mmr_measured_kib: float | None
    mmr_predicted_kib: float


MIN_MEMORY_ROWS = (
    MinMemoryRow("NORDIC", 0.0609, 32, 16, 16, 5.09e-9, 6.52e-7, 23.95, 382.6),
    MinMemoryRow("ISSI", 0.0587, 128, 16, 28, 2.30e-9, 2.95e-7, 22.32, 640),
    MinMemoryRow("IDT", 0.0542, 64, 32, 21, 4.84e-9, 6.19e-7, 14.32, 49.56),
    MinMemoryRow("CY", 0.0688, 64, 32, 22, 5.51e-9, 7.05e-7, 106.91, 767.4),
    MinMemoryRow("Winbond", 0.1626, 64, 64, 36, 5.17e-9, 6.61e-7, None, 1.15e9),
    MinMemoryRow("Microchip", 0.1622, 128, 32, 30, 4.83e-9, 6.19e-7, None, 1.15e9),
)
