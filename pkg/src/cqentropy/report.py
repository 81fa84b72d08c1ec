"""Result record shared by the key-length and output-length calculators."""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import OutOfRange


@dataclass(frozen=True)
class KeyRateReport:
    """Outcome of a finite-size length computation.

    ``e_hat`` is the estimated error parameter the entropy bound was evaluated
    at: the phase-error estimate for the QKD protocols and the click-rate
    estimate for the QRNG. ``terms`` holds every intermediate quantity.
    """

    hmin_smooth: float
    e_hat: float
    ell: int
    delta_sec: float
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ell < 0:
            raise OutOfRange(f"ell={self.ell} is negative")

    def to_dict(self) -> dict:
        return {
            "e_hat": self.e_hat,
            "hmin_smooth": self.hmin_smooth,
            "ell": self.ell,
            "delta_sec": self.delta_sec,
            "terms": dict(self.terms),
        }
