"""Entropy functions, sampling-without-replacement estimates and secrecy accounting.

All entropies and logarithms of counts are base 2. The 0 log 0 = 0
convention applies throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import OutOfRange

EXACT_TAIL_MAX_N = 64


def _check_unit(x: float, name: str) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0 or math.isnan(x):
        raise OutOfRange(f"{name}={x!r} not in [0, 1]")
    return x


def _check_open_unit(x: float, name: str) -> float:
    x = float(x)
    if not 0.0 < x < 1.0:
        raise OutOfRange(f"{name}={x!r} not in (0, 1)")
    return x


def _check_count(n: int, name: str) -> int:
    if int(n) != n or n < 1:
        raise OutOfRange(f"{name}={n!r} must be a positive integer")
    return int(n)


def _xlog2x(x: float) -> float:
    return x * math.log2(x) if x > 0.0 else 0.0


def binary_entropy(x: float) -> float:
    x = _check_unit(x, "x")
    return -_xlog2x(x) - _xlog2x(1.0 - x)


def quaternary_entropy(q: float) -> float:
    """Entropy of the distribution (q, (1-q)/3, (1-q)/3, (1-q)/3)."""
    q = _check_unit(q, "q")
    r = 1.0 - q
    return -_xlog2x(q) - (r * math.log2(r / 3.0) if r > 0.0 else 0.0)


def _log2_sum_exp2(terms: list[float]) -> float:
    top = max(terms)
    return top + math.log2(math.fsum(2.0 ** (t - top) for t in terms))


def _log2_binom(n: int, w: int) -> float:
    return (math.lgamma(n + 1) - math.lgamma(w + 1) - math.lgamma(n - w + 1)) / math.log(2)


def binomial_tail_log(n: int, frac: float, *, exact: bool | None = None) -> float:
    """log2 of sum_{w=0}^{floor(n*frac)} C(n, w).

    Exact integer accumulation for n <= 64, log-domain summation above (or as
    forced by ``exact``).
    """
    n = _check_count(n, "n")
    frac = _check_unit(frac, "frac")
    top = math.floor(n * frac + 1e-12)
    exact = n <= EXACT_TAIL_MAX_N if exact is None else exact
    if exact:
        return math.log2(sum(math.comb(n, w) for w in range(top + 1)))
    return _log2_sum_exp2([_log2_binom(n, w) for w in range(top + 1)])


def quaternary_tail_log(n: int, frac: float) -> float:
    """log2 of the number of strings in {0,1,2,3}^n with at most floor(n*frac) nonzero letters."""
    n = _check_count(n, "n")
    frac = _check_unit(frac, "frac")
    top = math.floor(n * frac + 1e-12)
    return math.log2(sum(math.comb(n, w) * 3**w for w in range(top + 1)))


# Concentration inequalities for sampling without replacement. Each maps
# (n, k, eps) to the additive deviation applied to an observed frequency.
ConcentrationBound = Callable[[int, int, float], float]


def serfling_delta(n: int, k: int, eps: float) -> float:
    """sqrt((n + k)(k + 1) / (n k^2) * ln(1/eps))."""
    n = _check_count(n, "n")
    k = _check_count(k, "k")
    eps = _check_open_unit(eps, "eps")
    return math.sqrt((n + k) * (k + 1) / (n * k * k) * math.log(1.0 / eps))


def serfling_delta_diqkd(n: int, k: int, eps_g: float) -> float:
    """sqrt((n + k)(4k + 1) / (16 n k^2) * ln(1/eps_g))."""
    n = _check_count(n, "n")
    k = _check_count(k, "k")
    eps_g = _check_open_unit(eps_g, "eps_g")
    return math.sqrt((n + k) * (4 * k + 1) / (16 * n * k * k) * math.log(1.0 / eps_g))


CONCENTRATION_BOUNDS: dict[str, ConcentrationBound] = {"serfling": serfling_delta}


def chsh_statistical_penalty(k: int, eps_t: float) -> float:
    """Deviation mu with 6 exp(-mu^2 k) = eps_t^2, i.e. sqrt(2/k ln(sqrt(6)/eps_t)).

    Returns 0 when the logarithm's argument is at most 1.
    """
    k = _check_count(k, "k")
    eps_t = float(eps_t)
    if not eps_t > 0.0:
        raise OutOfRange(f"eps_t={eps_t!r} must be positive")
    arg = math.log(math.sqrt(6.0) / eps_t)
    return math.sqrt(2.0 / k * arg) if arg > 0.0 else 0.0


def ch_composition_failure(mu: float, nu: float, n_rounds: int) -> float:
    """Failure probability 2 exp(-2 mu^2 N) + 4 exp(-nu^2 N)."""
    if mu < 0 or nu < 0:
        raise OutOfRange("mu and nu must be nonnegative")
    n_rounds = _check_count(n_rounds, "n_rounds")
    return 2.0 * math.exp(-2.0 * mu * mu * n_rounds) + 4.0 * math.exp(-nu * nu * n_rounds)


def secrecy_delta(ell: int, hmin_eps: float, eps_smooth: float) -> float:
    """Leftover-hash secrecy 2 eps + 1/2 sqrt(2^(ell - H))."""
    if ell < 0:
        raise OutOfRange("ell must be nonnegative")
    expo = (ell - hmin_eps) / 2.0
    hash_term = 0.5 * 2.0**expo if expo < 1000 else math.inf
    return 2.0 * eps_smooth + hash_term


@dataclass(frozen=True)
class FailureBudget:
    """Failure probabilities of one protocol run.

    ``eps_smooth`` is the smoothing parameter; the secrecy parameter is tied to
    it as ``eps_sec = 4 * eps_smooth``. For DI-QKD the smoothing parameter is the
    sum ``eps_t + eps_g`` of the testing and generation failure probabilities.
    """

    eps_smooth: float | None = None
    eps_cor: float = 1e-15
    eps_t: float | None = None
    eps_g: float | None = None
    eps_sec: float | None = None

    def __post_init__(self):
        eps = self.eps_smooth
        if eps is None and self.eps_t is not None and self.eps_g is not None:
            eps = self.eps_t + self.eps_g
        if eps is None and self.eps_sec is not None:
            eps = self.eps_sec / 4.0
        if eps is None:
            raise OutOfRange("one of eps_smooth, eps_sec or (eps_t, eps_g) is required")
        object.__setattr__(self, "eps_smooth", eps)
        if self.eps_sec is None:
            object.__setattr__(self, "eps_sec", 4.0 * eps)
        elif not math.isclose(self.eps_sec, 4.0 * eps, rel_tol=1e-12):
            raise OutOfRange(f"eps_sec={self.eps_sec} must equal 4*eps_smooth={4 * eps}")
        if self.eps_t is not None and self.eps_g is not None:
            if not math.isclose(self.eps_t + self.eps_g, eps, rel_tol=1e-12):
                raise OutOfRange("eps_smooth must equal eps_t + eps_g")
        for name in ("eps_smooth", "eps_cor", "eps_t", "eps_g", "eps_sec"):
            val = getattr(self, name)
            if val is not None:
                _check_open_unit(val, name)

    @classmethod
    def from_eps_sec(cls, eps_sec: float, eps_cor: float = 1e-15) -> "FailureBudget":
        return cls(eps_smooth=eps_sec / 4.0, eps_cor=eps_cor)

    @classmethod
    def for_diqkd(cls, eps_t: float, eps_g: float, eps_cor: float = 1e-15) -> "FailureBudget":
        return cls(eps_cor=eps_cor, eps_t=eps_t, eps_g=eps_g)

    def to_dict(self) -> dict:
        return {
            "eps_smooth": self.eps_smooth,
            "eps_sec": self.eps_sec,
            "eps_cor": self.eps_cor,
            "eps_t": self.eps_t,
            "eps_g": self.eps_g,
        }


def finite_key_overhead(eps_sec: float, eps_cor: float) -> float:
    """log2(2 / (eps_sec^2 eps_cor)) subtracted from the QKD key lengths."""
    return math.log2(2.0) - 2.0 * math.log2(eps_sec) - math.log2(eps_cor)
