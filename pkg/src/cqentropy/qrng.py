"""Source-independent continuous-variable QRNG.

An untrusted, phase-randomized source sum_m p_m |m><m| is measured by
heterodyne detection and the phase is binned into ``bins`` equal sectors. Eve's
knowledge of the bin is bounded through the residues q_y = sum_m p_(bins m + y),
and a threshold detector on test rounds bounds 1 - q_0 by the click rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal

from . import bounds, minentropy
from .bb84 import _as_count
from .bounds import FailureBudget
from .errors import InvalidProfile, InvalidState, NumericalError, OutOfRange, SeedLengthMismatch, TooLarge
from .report import KeyRateReport

TAIL_TOL = 1e-12
BINS = 4
MAX_ORACLE_TRUNC = 16
DIRECT_EXTRACT_LIMIT = 1 << 22
# quaternary_entropy attains 2 bits here
PEAK_CLICK_RATE = 0.25


@dataclass(frozen=True)
class FockDiagonalState:
    """Photon-number distribution ``probs[m]`` with declared mean-energy bound ``energy``."""

    probs: np.ndarray
    energy: float | None = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        if p.size < 1 or not np.all(np.isfinite(p)) or p.min() < 0:
            raise InvalidState("photon-number probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise InvalidState(f"photon-number probabilities sum to {p.sum()!r}")
        p = p / p.sum()
        mean = float(np.dot(np.arange(p.size), p))
        energy = mean if self.energy is None else float(self.energy)
        if mean > energy * (1 + 1e-12) + 1e-12:
            raise InvalidState(f"mean photon number {mean} exceeds declared bound {energy}")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "energy", energy)

    @property
    def m_max(self) -> int:
        return self.probs.size - 1

    @property
    def mean_photon_number(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    @classmethod
    def from_probs(cls, probs, energy: float | None = None) -> "FockDiagonalState":
        return cls(np.asarray(probs, dtype=float), energy)

    @classmethod
    def fock(cls, m: int) -> "FockDiagonalState":
        p = np.zeros(m + 1)
        p[m] = 1.0
        return cls(p)

    @classmethod
    def _truncated(cls, logpmf, tail_tol: float) -> "FockDiagonalState":
        vals = []
        m = 0
        while True:
            vals.append(math.exp(logpmf(m)))
            # both families have geometrically decaying tails beyond the mode
            if m > 0 and vals[-1] < tail_tol * 1e-3 and 1.0 - math.fsum(vals) < tail_tol:
                break
            m += 1
            if m > 100_000:
                raise InvalidState("truncation did not converge")
        p = np.array(vals)
        return cls(p / p.sum())

    @classmethod
    def poisson(cls, mu: float, tail_tol: float = TAIL_TOL) -> "FockDiagonalState":
        """Phase-randomized coherent state of intensity ``mu``."""
        if not mu >= 0:
            raise OutOfRange(f"mu={mu!r} must be >= 0")
        if mu == 0:
            return cls(np.array([1.0]))
        return cls._truncated(lambda m: -mu + m * math.log(mu) - math.lgamma(m + 1), tail_tol)

    @classmethod
    def thermal(cls, nbar: float, tail_tol: float = TAIL_TOL) -> "FockDiagonalState":
        if not nbar >= 0:
            raise OutOfRange(f"nbar={nbar!r} must be >= 0")
        if nbar == 0:
            return cls(np.array([1.0]))
        r = nbar / (1.0 + nbar)
        return cls._truncated(lambda m: m * math.log(r) - math.log1p(nbar), tail_tol)

    def truncated(self, size: int) -> "FockDiagonalState":
        """Keep the first ``size`` photon numbers and renormalize."""
        p = self.probs[:size]
        return FockDiagonalState(p / p.sum())


@dataclass(frozen=True)
class ResidueProfile:
    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).ravel()
        if q.size < 2 or q.min() < -1e-12 or abs(q.sum() - 1.0) > 1e-9:
            raise InvalidProfile(f"not a probability vector: {q}")
        object.__setattr__(self, "q", np.clip(q, 0.0, None))


def residue_profile(s: FockDiagonalState, bins: int = BINS) -> ResidueProfile:
    """q_y = sum_m p_(bins m + y), renormalized over the truncated support."""
    q = np.zeros(bins)
    np.add.at(q, np.arange(s.probs.size) % bins, s.probs)
    return ResidueProfile(q / q.sum())


def qrng_hmin_per_round(r: ResidueProfile) -> float:
    """log2(bins) - log2 (sum_y sqrt(q_y))^2."""
    return minentropy.min_entropy_lb(r.q)


def _log_radial_weight(m: int, mu: float) -> float:
    return -mu + (m * math.log(mu) if mu > 0 else (0.0 if m == 0 else -math.inf)) - math.lgamma(m + 1)


def heterodyne_bin_povm_diagonal(size: int, bins: int = BINS) -> np.ndarray:
    """Diagonal Fock elements <m|Pi_x|m>, shape (bins, size), by numerical quadrature.

    Pi_x = (1/2pi) int_sector dtheta int_0^inf dmu |sqrt(mu) e^(i theta)><...|,
    so <m|Pi_x|m> = (1/2pi) int_sector dtheta int dmu e^-mu mu^m / m!.
    """
    out = np.zeros((bins, size))
    for x in range(bins):
        lo, hi = 2 * math.pi * x / bins, 2 * math.pi * (x + 1) / bins
        arc, _ = integrate.quad(lambda t: 1.0 / (2 * math.pi), lo, hi)
        for m in range(size):
            radial, _ = integrate.quad(lambda mu: math.exp(_log_radial_weight(m, mu)), 0.0, math.inf, epsabs=1e-14, epsrel=1e-12)
            out[x, m] = arc * radial
    return out


def heterodyne_bin_probs(s: FockDiagonalState, bins: int = BINS) -> np.ndarray:
    """Bin probabilities Tr[Pi_x rho]; phase symmetry makes each exactly 1/bins."""
    diag = heterodyne_bin_povm_diagonal(s.probs.size, bins)
    probs = diag @ s.probs
    if np.abs(probs - 1.0 / bins).max() > 1e-10:
        raise NumericalError(f"heterodyne quadrature drifted: {probs}")
    return probs


@dataclass(frozen=True)
class QrngParams:
    n: int
    k: int
    q_obs: float
    budget: FailureBudget

    def __post_init__(self):
        object.__setattr__(self, "n", _as_count(self.n, "n"))
        object.__setattr__(self, "k", _as_count(self.k, "k"))
        if not 0.0 <= self.q_obs <= 1.0:
            raise OutOfRange(f"q_obs={self.q_obs!r} not in [0, 1]")


def q_hat(p: QrngParams) -> float:
    """Click-rate estimate for the generation rounds, clamped to [0, 3/4]."""
    q = p.q_obs + bounds.serfling_delta(p.n, p.k, p.budget.eps_smooth)
    return min(max(q, 0.0), 0.75)


def click_entropy(q: float) -> float:
    """H(q), held at its maximum 2 for q >= 1/4 so the bound never improves with more clicks."""
    q = min(max(q, 0.0), 1.0)
    return 2.0 if q >= PEAK_CLICK_RATE else bounds.quaternary_entropy(q)


def asymptotic_rate(q: float) -> float:
    """2 - H(Q) bits per round with no finite-size correction."""
    return 2.0 - click_entropy(q)


def qrng_output_length(p: QrngParams) -> KeyRateReport:
    delta = bounds.serfling_delta(p.n, p.k, p.budget.eps_smooth)
    qh = q_hat(p)
    hq = click_entropy(qh)
    hmin = p.n * (2.0 - hq)
    overhead = -2.0 * math.log2(p.budget.eps_sec)
    rhs = hmin - overhead
    ell = max(0, math.floor(rhs))
    delta_sec = bounds.secrecy_delta(ell, hmin, p.budget.eps_smooth) if ell > 0 else 0.0
    terms = {
        "serfling_delta": delta,
        "h_q_hat": hq,
        "overhead": overhead,
        "ell_real": rhs,
        "rate": ell / p.n,
    }
    return KeyRateReport(hmin_smooth=hmin, e_hat=qh, ell=ell, delta_sec=delta_sec, terms=terms)


@dataclass(frozen=True)
class QrngSample:
    x: np.ndarray  # symbols in {0, .., bins-1}
    clicks: np.ndarray  # threshold detector outcome per round
    click_freq: float


def simulate_qrng(n_rounds: int, source: FockDiagonalState, seed: int, bins: int = BINS) -> QrngSample:
    """Photon number from ``source``, uniform heterodyne phase binned to x, click iff m >= 1."""
    n_rounds = _as_count(n_rounds, "n_rounds")
    rng = np.random.default_rng(seed)
    m = rng.choice(source.probs.size, size=n_rounds, p=source.probs)
    theta = rng.uniform(0.0, 2 * math.pi, size=n_rounds)
    x = np.minimum((theta * bins / (2 * math.pi)).astype(np.int64), bins - 1)
    clicks = m >= 1
    return QrngSample(x=x, clicks=clicks, click_freq=float(clicks.mean()))


def symbols_to_bits(x: np.ndarray, bins: int = BINS) -> np.ndarray:
    """Expand each symbol into log2(bins) bits, most significant first."""
    width = int(round(math.log2(bins)))
    if 2**width != bins:
        raise OutOfRange(f"bins={bins} is not a power of two")
    x = np.asarray(x, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return ((x[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


@dataclass(frozen=True)
class ToeplitzSeed:
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits).ravel()
        if b.size and not np.all((b == 0) | (b == 1)):
            raise OutOfRange("seed entries must be 0 or 1")
        object.__setattr__(self, "bits", b.astype(np.uint8))

    @classmethod
    def random(cls, input_len: int, output_len: int, rng: np.random.Generator) -> "ToeplitzSeed":
        return cls(rng.integers(0, 2, size=input_len + output_len - 1, dtype=np.uint8))


def toeplitz_matrix(seed: ToeplitzSeed, input_len: int, out_len: int) -> np.ndarray:
    """T[i, j] = seed[i - j + input_len - 1], shape (out_len, input_len)."""
    if seed.bits.size != input_len + out_len - 1:
        raise SeedLengthMismatch(f"seed has {seed.bits.size} bits, need {input_len + out_len - 1}")
    i = np.arange(out_len)[:, None]
    j = np.arange(input_len)[None, :]
    return seed.bits[i - j + input_len - 1]


def toeplitz_extract(raw, seed: ToeplitzSeed, out_len: int) -> np.ndarray:
    """y_i = xor_j T[i, j] x_j over GF(2). ``raw`` may be one bit vector or a 2-D batch of rows."""
    x = np.asarray(raw, dtype=np.uint8)
    if not np.all(x <= 1):
        raise OutOfRange("raw entries must be 0 or 1")
    n = x.shape[-1]
    if out_len < 0:
        raise OutOfRange("out_len must be >= 0")
    if seed.bits.size != n + out_len - 1 and out_len > 0:
        raise SeedLengthMismatch(f"seed has {seed.bits.size} bits, need {n + out_len - 1}")
    if out_len == 0:
        return np.zeros(x.shape[:-1] + (0,), dtype=np.uint8)
    if x.ndim == 2 or n * out_len <= DIRECT_EXTRACT_LIMIT:
        t = toeplitz_matrix(seed, n, out_len).astype(np.int64)
        return ((x.astype(np.int64) @ t.T) & 1).astype(np.uint8)
    # y_i is entry i + n - 1 of the full convolution of seed and x
    conv = signal.fftconvolve(seed.bits.astype(float), x.astype(float))
    return (np.rint(conv[n - 1 : n - 1 + out_len]).astype(np.int64) & 1).astype(np.uint8)


def reduced_cq_state(s: FockDiagonalState, bins: int = BINS) -> minentropy.CQState:
    """Uniform x with pure conditionals sum_m sqrt(p_m) exp(-i m x 2pi/bins)|e_m>."""
    m = np.arange(s.probs.size)
    x = np.arange(bins)
    vecs = np.sqrt(s.probs)[None, :] * np.exp(-2j * np.pi * np.outer(x, m) / bins)
    return minentropy.CQState.from_pure(np.full(bins, 1.0 / bins), vecs)


def _residue_isometry(s: FockDiagonalState, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Columns |E_y> = sum_m sqrt(p_(bins m + y) / q_y)|e_(bins m + y)> and the residues q_y."""
    size = s.probs.size
    q = np.zeros(bins)
    np.add.at(q, np.arange(size) % bins, s.probs)
    iso = np.zeros((size, bins))
    for y in range(bins):
        idx = np.arange(y, size, bins)
        if q[y] > 0:
            iso[idx, y] = np.sqrt(s.probs[idx] / q[y])
        elif y < size:
            iso[y, y] = 1.0  # any unit vector in the empty residue class keeps the POVM complete
    return iso.astype(complex), q


def reduced_state_povm(s: FockDiagonalState, bins: int = BINS) -> minentropy.Povm:
    """Fourier measurement on span{|E_y>}, relabelled x -> -x, completed on the orthogonal complement."""
    iso, q = _residue_isometry(s, bins)
    size = s.probs.size
    if size < bins:
        raise TooLarge(f"need at least {bins} Fock levels, got {size}")
    f = minentropy.fourier_matrix(bins)
    el = np.zeros((bins, size, size), dtype=complex)
    for x in range(bins):
        # the states carry w^(-xy), so outcome x uses Fourier column -x mod bins
        v = iso @ f[:, (-x) % bins]
        el[x] = np.outer(v, v.conj())
    el[0] += np.eye(size) - iso @ iso.conj().T
    return minentropy.Povm(el)


def reduced_state_hmin_oracle(s: FockDiagonalState, trunc: int, bins: int = BINS) -> float:
    """Exact min-entropy of the reduced CQ state on the first ``trunc`` Fock levels.

    The candidate POVM is certified optimal by the dual certificate before its
    guessing probability is converted to a min-entropy.
    """
    if trunc > MAX_ORACLE_TRUNC:
        raise TooLarge(f"trunc={trunc} exceeds {MAX_ORACLE_TRUNC}")
    src = s.truncated(trunc) if s.probs.size > trunc else s
    if src.probs.size < bins:
        src = FockDiagonalState(np.pad(src.probs, (0, bins - src.probs.size)))
    state = reduced_cq_state(src, bins)
    povm = reduced_state_povm(src, bins)
    if not minentropy.dual_certificate(state, povm, tol=1e-8):
        raise NumericalError("reduced-state POVM failed the optimality certificate")
    return minentropy.exact_min_entropy(minentropy.guess_prob(state, povm))


def omega_matrix(size: int) -> np.ndarray:
    """Omega_mm' = int_0^inf e^-mu sqrt(mu^m mu^m' / (m! m'!)) dmu = Gamma((m+m')/2 + 1) / sqrt(m! m'!)."""
    m = np.arange(size)
    lg = np.array([math.lgamma(v + 1) for v in m])
    half = np.array([[math.lgamma((a + b) / 2 + 1) for b in m] for a in m])
    return np.exp(half - 0.5 * (lg[:, None] + lg[None, :]))


def damped_cq_state(s: FockDiagonalState, bins: int = BINS) -> minentropy.CQState:
    """The heterodyne-integrated state whose coherences are those of the reduced state times Omega."""
    base = reduced_cq_state(s, bins)
    om = omega_matrix(s.probs.size)
    return minentropy.CQState(base.probs, base.cond_states * om[None, :, :])


def damped_guess_upper_bound(s: FockDiagonalState, bins: int = BINS) -> tuple[float, bool]:
    """Dual bound on the damped state's guessing probability.

    Y = sum_x p_x tau_x M_x from the reduced state's optimal POVM dominates each
    p_x tau_x; the Schur product with the Gram matrix Omega is a positive
    trace-preserving map, so Omega * Y dominates the damped operators and has
    the same trace. Returns (Tr[Omega * Y], whether the domination checks out).
    """
    base = reduced_cq_state(s, bins)
    povm = reduced_state_povm(s, bins)
    y = np.einsum("xij,xjk->ik", base.weighted(), povm.elements)
    y = 0.5 * (y + y.conj().T)
    y_damped = omega_matrix(s.probs.size) * y
    damped = damped_cq_state(s, bins)
    ok = all(np.linalg.eigvalsh(y_damped - w).min() >= -1e-9 for w in damped.weighted())
    return float(np.trace(y_damped).real), ok
