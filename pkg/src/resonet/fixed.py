"""Signed, saturating fixed-point arithmetic.

Values are carried as raw ``int64`` numpy arrays holding ``round(x * 2**frac_bits)``.
Every operation that can overflow saturates to the format's range and reports how
many elements were clipped to a :class:`Diagnostics` counter.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Diagnostics:
    """Run counters queryable after a simulation."""

    saturations: int = 0
    spikes: int = 0
    synops: int = 0
    dropped_events: int = 0
    extra: dict = field(default_factory=dict)

    def merge(self, other: "Diagnostics") -> None:
        self.saturations += other.saturations
        self.spikes += other.spikes
        self.synops += other.synops
        self.dropped_events += other.dropped_events
        for k, v in other.extra.items():
            self.extra[k] = self.extra.get(k, 0) + v

    def as_dict(self) -> dict:
        out = {
            "saturations": self.saturations,
            "spikes": self.spikes,
            "synops": self.synops,
            "dropped_events": self.dropped_events,
        }
        out.update(self.extra)
        return out


@dataclass(frozen=True)
class FixedFormat:
    """Two's-complement signed format with ``total_bits`` bits, ``frac_bits`` of them fractional."""

    total_bits: int = 24
    frac_bits: int = 14
    signed: bool = True

    def __post_init__(self):
        if not 2 <= self.total_bits <= 32:
            raise ValueError(f"total_bits must be in [2, 32], got {self.total_bits}")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ValueError(f"frac_bits must be in [0, total_bits), got {self.frac_bits}")
        if not self.signed:
            raise ValueError("only signed formats are supported")

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def quantum(self) -> float:
        return 1.0 / self.scale

    @property
    def max_int(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def min_int(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def max_value(self) -> float:
        return self.max_int / self.scale

    @property
    def min_value(self) -> float:
        return self.min_int / self.scale

    def saturate(self, q, diag: Diagnostics | None = None):
        q = np.asarray(q, dtype=np.int64)
        clipped = np.clip(q, self.min_int, self.max_int)
        if diag is not None:
            diag.saturations += int(np.count_nonzero(clipped != q))
        return clipped

    def to_fixed(self, x, diag: Diagnostics | None = None):
        """Round to nearest (half away from zero) and saturate."""
        x = np.asarray(x, dtype=np.float64)
        scaled = x * self.scale
        big = np.clip(scaled, self.min_int - 1.0, self.max_int + 1.0)
        q = (np.sign(big) * np.floor(np.abs(big) + 0.5)).astype(np.int64)
        return self.saturate(q, diag)

    def to_float(self, q):
        return np.asarray(q, dtype=np.float64) / self.scale


# Coefficient format used for decays and rotation kernels.
COEF_FORMAT = FixedFormat(16, 15)
# Default state format.
STATE_FORMAT = FixedFormat(24, 14)
# Graded spike payloads.
PAYLOAD_FORMAT = FixedFormat(32, 14)


def mul_shift(q, coef, shift: int):
    """Multiply raw integers and drop ``shift`` fractional bits, rounding half up.

    ``q * coef`` must fit in int64: a 32-bit operand times a 16-bit coefficient is fine.
    """
    prod = np.asarray(q, dtype=np.int64) * np.asarray(coef, dtype=np.int64)
    if shift == 0:
        return prod
    return (prod + (1 << (shift - 1))) >> shift
