"""Min-entropy lower bounds for classical-quantum states and finite-size key lengths for BB84, DI-QKD and a CV QRNG."""
from .errors import NumericalError, ValidationError
from .minentropy import CQState, EigProfile, Povm, min_entropy_lb, uniformize
from .report import KeyRateReport

__all__ = [
    "CQState",
    "EigProfile",
    "KeyRateReport",
    "NumericalError",
    "Povm",
    "ValidationError",
    "min_entropy_lb",
    "uniformize",
]
__version__ = "0.1.0"
