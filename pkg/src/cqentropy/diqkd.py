"""Device-independent QKD with causally independent measurements.

Measurement operators (bit 1 for eigenvalue +1, bit 0 for -1):

    A0 = cos a Z + sin a X      B0 = cos b Z + sin b X
    A1 = cos a X + sin a Z      B1 = cos b Z - sin b X

The CHSH operator S = (A0B0 + A0B1 + A1B0 - A1B1)/4 has correlation matrix
T = [[cos a cos b, sin a sin b], [sin a cos b, cos a sin b]] in the (Z, X)
basis. Its squared singular values are Lambda_+-, so in a locally rotated
frame S = (sqrt(L+) ZZ + sqrt(L-) XX)/2 and the winning probability of the
game x xor y = ka kb equals 1/2 + Tr[S rho]/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds, qmath
from .bb84 import _as_count
from .bounds import FailureBudget
from .errors import InvalidDistribution, OutOfRange
from .report import KeyRateReport

TSIRELSON = (2.0 + math.sqrt(2.0)) / 4.0

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True)
class MeasurementAngles:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise OutOfRange("angles must be finite")

    def operators(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(A0, A1, B0, B1) as 2x2 matrices."""
        ca, sa = math.cos(self.alpha), math.sin(self.alpha)
        cb, sb = math.cos(self.beta), math.sin(self.beta)
        return (ca * _Z + sa * _X, ca * _X + sa * _Z, cb * _Z + sb * _X, cb * _Z - sb * _X)

    def chsh_operator(self) -> np.ndarray:
        a0, a1, b0, b1 = self.operators()
        return (np.kron(a0, b0) + np.kron(a0, b1) + np.kron(a1, b0) - np.kron(a1, b1)) / 4.0

    def correlation_matrix(self) -> np.ndarray:
        """T with S = (1/2) sum_pq T[p, q] sigma_p (x) sigma_q, p, q over (Z, X)."""
        ca, sa = math.cos(self.alpha), math.sin(self.alpha)
        cb, sb = math.cos(self.beta), math.sin(self.beta)
        return np.array([[ca * cb, sa * sb], [sa * cb, ca * sb]])


STANDARD_ANGLES = MeasurementAngles(0.0, math.pi / 4)


@dataclass(frozen=True)
class ChshDecomposition:
    lambda_plus: float
    lambda_minus: float

    def __post_init__(self):
        for v in (self.lambda_plus, self.lambda_minus):
            if not -1e-12 <= v <= 1 + 1e-12:
                raise OutOfRange(f"Lambda={v!r} outside [0, 1]")
        if abs(self.lambda_plus + self.lambda_minus - 1.0) > 1e-12:
            raise OutOfRange("Lambda+ + Lambda- must equal 1")


def chsh_decompose(a: MeasurementAngles) -> ChshDecomposition:
    c = math.cos(2 * a.alpha) * math.sin(2 * a.beta)
    r = math.sqrt(max(1.0 - c * c, 0.0))
    return ChshDecomposition(0.5 * (1.0 + r), 0.5 * (1.0 - r))


@dataclass(frozen=True)
class SingleRoundSpectrum:
    """Bell-diagonal weights; index (i, j) labels sigma_{i,j} with sigma_10 = Z, sigma_01 = X on Bob's qubit."""

    l00: float
    l10: float
    l01: float
    l11: float

    def __post_init__(self):
        v = self.as_array()
        if not np.all(np.isfinite(v)) or v.min() < -1e-12:
            raise InvalidDistribution("weights must be finite and nonnegative")
        if abs(v.sum() - 1.0) > 1e-9:
            raise InvalidDistribution(f"weights sum to {v.sum()!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.l00, self.l10, self.l01, self.l11], dtype=float)

    @classmethod
    def werner(cls, q: float) -> "SingleRoundSpectrum":
        return cls(1 - 0.75 * q, 0.25 * q, 0.25 * q, 0.25 * q)

    @property
    def phase_mass(self) -> float:
        return self.l10 + self.l01

    def density_matrix(self) -> np.ndarray:
        """rho = sum_ij lambda_ij |Phi_ij><Phi_ij| in the standard two-qubit basis."""
        rho = np.zeros((4, 4), dtype=complex)
        paulis = {(0, 0): _I2, (1, 0): _Z, (0, 1): _X, (1, 1): _X @ _Z}
        weights = {(0, 0): self.l00, (1, 0): self.l10, (0, 1): self.l01, (1, 1): self.l11}
        for key, op in paulis.items():
            v = np.kron(_I2, op) @ _PHI_PLUS
            rho += weights[key] * np.outer(v, v.conj())
        return rho


def winning_freq(spec: SingleRoundSpectrum, dec: ChshDecomposition) -> float:
    zz = spec.l00 - spec.l11 + spec.l10 - spec.l01
    xx = spec.l00 - spec.l11 - spec.l10 + spec.l01
    w = 0.25 * (2.0 + math.sqrt(dec.lambda_plus) * zz + math.sqrt(dec.lambda_minus) * xx)
    return min(max(w, 0.0), 1.0)


def phase_error_from_omega(omega_hat: float) -> float:
    """Phase-error bound (1 - sqrt(16 w (w - 1) + 3)) / 2, total on [0, 1].

    Below the classical value 3/4 the bound carries no information and is 1/2;
    above Tsirelson's value the radicand exceeds 1 and the result is 0.
    """
    w = float(omega_hat)
    if not 0.0 <= w <= 1.0:
        raise OutOfRange(f"omega_hat={w!r} not in [0, 1]")
    if w <= 0.75:
        return 0.5
    if w >= TSIRELSON:
        return 0.0
    rad = (4.0 * w - 2.0) ** 2 - 1.0  # = 16 w (w - 1) + 3
    if rad >= 1.0:
        return 0.0
    return min(max(0.5 * (1.0 - math.sqrt(max(rad, 0.0))), 0.0), 0.5)


def single_round_hmin(spec: SingleRoundSpectrum) -> float:
    """1 - log2 (sqrt(l00 + l11) + sqrt(l10 + l01))^2."""
    s = math.sqrt(max(spec.l00 + spec.l11, 0.0)) + math.sqrt(max(spec.l10 + spec.l01, 0.0))
    return min(max(1.0 - 2.0 * math.log2(s), 0.0), 1.0)


@dataclass(frozen=True)
class DiqkdParams:
    """``n`` key rounds and ``k`` test rounds per setting combination (4n + 4k rounds in total)."""

    n: int
    k: int
    omega: float
    leak_ec: float
    budget: FailureBudget

    def __post_init__(self):
        object.__setattr__(self, "n", _as_count(self.n, "n"))
        object.__setattr__(self, "k", _as_count(self.k, "k"))
        if not 0.0 <= self.omega <= 1.0:
            raise OutOfRange(f"omega={self.omega!r} not in [0, 1]")
        if self.budget.eps_t is None or self.budget.eps_g is None:
            raise OutOfRange("DI-QKD budget needs eps_t and eps_g")
        if not self.leak_ec >= 0:
            raise OutOfRange(f"leak_ec={self.leak_ec!r} must be >= 0")

    @classmethod
    def with_auto_leak(cls, n, k, omega, qber, budget: FailureBudget, efficiency: float = 1.16) -> "DiqkdParams":
        return cls(n, k, omega, efficiency * 4 * int(n) * bounds.binary_entropy(qber), budget)


def omega_hat(p: DiqkdParams) -> float:
    mu = bounds.chsh_statistical_penalty(p.k, p.budget.eps_t)
    nu = bounds.serfling_delta_diqkd(p.n, p.k, p.budget.eps_g)
    return min(max(p.omega - mu - nu, 0.0), 1.0)


def diqkd_key_length(p: DiqkdParams) -> KeyRateReport:
    mu = bounds.chsh_statistical_penalty(p.k, p.budget.eps_t)
    nu = bounds.serfling_delta_diqkd(p.n, p.k, p.budget.eps_g)
    w_hat = omega_hat(p)
    e_ph = phase_error_from_omega(w_hat)
    rounds = 4 * p.n
    hmin = rounds * (1.0 - bounds.binary_entropy(e_ph))
    overhead = bounds.finite_key_overhead(p.budget.eps_sec, p.budget.eps_cor)
    rhs = hmin - p.leak_ec - overhead
    ell = max(0, math.floor(rhs))
    h_eff = hmin - p.leak_ec - math.log2(2.0 / p.budget.eps_cor)
    delta_sec = bounds.secrecy_delta(ell, h_eff, p.budget.eps_smooth) if ell > 0 else 0.0
    terms = {
        "chsh_penalty": mu,
        "serfling_delta": nu,
        "omega_hat": w_hat,
        "h_e_hat": bounds.binary_entropy(e_ph),
        "key_rounds": rounds,
        "leak_ec": p.leak_ec,
        "overhead": overhead,
        "ell_real": rhs,
        "rate": ell / rounds,
    }
    return KeyRateReport(hmin_smooth=hmin, e_hat=e_ph, ell=ell, delta_sec=delta_sec, terms=terms)


def _frame_unitary(sz: np.ndarray, sx: np.ndarray) -> np.ndarray:
    """Unitary V with V Z V^dag = sz and V X V^dag = sx (sz, sx anticommuting Pauli-like)."""
    dec = qmath.eig_hermitian(sz)
    v_plus, v_minus = dec.eigenvectors[:, 1], dec.eigenvectors[:, 0]
    c = v_plus.conj() @ sx @ v_minus
    v_minus = v_minus * np.conj(c) / abs(c)
    return np.column_stack([v_plus, v_minus])


def rotated_frame(a: MeasurementAngles) -> tuple[np.ndarray, np.ndarray]:
    """Local unitaries (V_A, V_B) with (V_A (x) V_B)^dag S (V_A (x) V_B) = (sqrt(L+) ZZ + sqrt(L-) XX)/2."""
    u, s, vt = np.linalg.svd(a.correlation_matrix())
    paulis = (_Z, _X)

    def combo(vec):
        return vec[0] * paulis[0] + vec[1] * paulis[1]

    va = _frame_unitary(combo(u[:, 0]), combo(u[:, 1]))
    vb = _frame_unitary(combo(vt[0]), combo(vt[1]))
    return va, vb


def _projectors(op: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(P_bit0, P_bit1): eigenvalue -1 gives bit 0, +1 gives bit 1."""
    dec = qmath.eig_hermitian(op)
    v = dec.eigenvectors
    return np.outer(v[:, 0], v[:, 0].conj()), np.outer(v[:, 1], v[:, 1].conj())


def outcome_table(rho: np.ndarray, op_a: np.ndarray, op_b: np.ndarray) -> np.ndarray:
    """Born-rule probabilities P(x, y) as a 2x2 array."""
    pa, pb = _projectors(op_a), _projectors(op_b)
    probs = np.array([[np.trace(np.kron(pa[x], pb[y]) @ rho).real for y in (0, 1)] for x in (0, 1)])
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


@dataclass(frozen=True)
class ChshSample:
    omega: float
    counts: dict = field(default_factory=dict)  # "ka kb" -> [rounds, wins]
    qber: float | None = None


def simulate_chsh(n_rounds: int, spec: SingleRoundSpectrum, angles: MeasurementAngles, seed: int, key_rounds: int = 0) -> ChshSample:
    """Testing-mode CHSH rounds on i.i.d. copies of the Bell-diagonal state in the frame diagonalizing S.

    Every round picks (ka, kb) uniformly, samples (x, y) from explicit
    projectors of A_ka (x) B_kb and scores x xor y == ka kb. Optional key
    rounds measure A0 on both sides and report the bit error rate.
    """
    n_rounds = _as_count(n_rounds, "n_rounds")
    if n_rounds < 4:
        raise OutOfRange("n_rounds must be >= 4")
    rng = np.random.default_rng(seed)
    va, vb = rotated_frame(angles)
    u = np.kron(va, vb)
    rho = u @ spec.density_matrix() @ u.conj().T
    a_ops = angles.operators()[:2]
    b_ops = angles.operators()[2:]
    combos = rng.integers(0, 4, size=n_rounds)
    counts = {}
    wins_total = 0
    for c in range(4):
        ka, kb = c >> 1, c & 1
        m = int((combos == c).sum())
        table = outcome_table(rho, a_ops[ka], b_ops[kb])
        outcomes = rng.choice(4, size=m, p=table.reshape(-1))
        x, y = outcomes >> 1, outcomes & 1
        wins = int(((x ^ y) == (ka & kb)).sum())
        counts[f"{ka}{kb}"] = [m, wins]
        wins_total += wins
    qber = None
    if key_rounds:
        table = outcome_table(rho, a_ops[0], a_ops[0])
        outcomes = rng.choice(4, size=int(key_rounds), p=table.reshape(-1))
        qber = float(((outcomes >> 1) != (outcomes & 1)).mean())
    return ChshSample(omega=wins_total / n_rounds, counts=counts, qber=qber)
