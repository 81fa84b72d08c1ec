"""Finite-key analysis of entanglement-based BB84.

Pair k of an n-pair Bell-diagonal state is (I (x) X^i_k Z^j_k)|Phi+>. An X-basis
measurement is blind to the index i (it only picks up a phase) while j flips
the X outcome; in the Z basis the roles swap. Hence j drives the observed X
error rate, i drives the Z error rate, and the Z-error marginal of the
spectrum is what bounds Eve's knowledge of the X-basis key.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .bounds import FailureBudget
from .errors import InvalidDistribution, OutOfRange, TooLarge
from .minentropy import CQState, min_entropy_lb
from .report import KeyRateReport

LEAK_EFFICIENCY = 1.16
MAX_EXACT_PAIRS = 6
MAX_EXPLICIT_PAIRS = 3

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def _as_count(v, name: str) -> int:
    if isinstance(v, float) and not v.is_integer():
        raise OutOfRange(f"{name}={v!r} is not an integer")
    v = int(v)
    if v < 1:
        raise OutOfRange(f"{name}={v} must be >= 1")
    return v


@dataclass(frozen=True)
class Bb84Params:
    n: int
    k: int
    e_x: float
    e_z: float
    leak_ec: float
    budget: FailureBudget

    def __post_init__(self):
        object.__setattr__(self, "n", _as_count(self.n, "n"))
        object.__setattr__(self, "k", _as_count(self.k, "k"))
        for name in ("e_x", "e_z"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 0.5:
                raise OutOfRange(f"{name}={v!r} not in [0, 1/2]")
            object.__setattr__(self, name, v)
        if not self.leak_ec >= 0:
            raise OutOfRange(f"leak_ec={self.leak_ec!r} must be >= 0")

    @classmethod
    def with_auto_leak(cls, n, k, e_x, e_z, budget: FailureBudget, efficiency: float = LEAK_EFFICIENCY) -> "Bb84Params":
        """leak_ec = f n h(e_x), the usual practical error-correction cost model."""
        return cls(n, k, e_x, e_z, efficiency * int(n) * bounds.binary_entropy(e_x), budget)


def bb84_e_hat(p: Bb84Params) -> float:
    """Upper estimate of the phase-error rate on the key bits, clamped to [0, 1/2]."""
    e = p.e_z + bounds.serfling_delta(p.n, p.k, p.budget.eps_smooth)
    return min(max(e, 0.0), 0.5)


def bb84_key_length(p: Bb84Params) -> KeyRateReport:
    delta = bounds.serfling_delta(p.n, p.k, p.budget.eps_smooth)
    e_hat = bb84_e_hat(p)
    hmin = p.n * (1.0 - bounds.binary_entropy(e_hat))
    overhead = bounds.finite_key_overhead(p.budget.eps_sec, p.budget.eps_cor)
    rhs = hmin - p.leak_ec - overhead
    ell = max(0, math.floor(rhs))
    # entropy left after error correction and verification
    h_eff = hmin - p.leak_ec - math.log2(2.0 / p.budget.eps_cor)
    delta_sec = bounds.secrecy_delta(ell, h_eff, p.budget.eps_smooth) if ell > 0 else 0.0
    terms = {
        "serfling_delta": delta,
        "h_e_hat": bounds.binary_entropy(e_hat),
        "leak_ec": p.leak_ec,
        "overhead": overhead,
        "ell_real": rhs,
        "rate": ell / p.n,
    }
    return KeyRateReport(hmin_smooth=hmin, e_hat=e_hat, ell=ell, delta_sec=delta_sec, terms=terms)


@dataclass(frozen=True)
class BellSpectrum:
    """Weights lambda_{i,j} of an n-pair Bell-diagonal state; ``weights[i, j]`` with i, j integer-coded bit strings.

    Bit strings map to integers with pair 0 as the most significant bit.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 2 or w.shape[0] & (w.shape[0] - 1):
            raise InvalidDistribution(f"weights must be 2^n x 2^n, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or w.min() < -1e-12:
            raise InvalidDistribution("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InvalidDistribution(f"weights sum to {w.sum()!r}")
        object.__setattr__(self, "weights", np.clip(w, 0.0, None))

    @property
    def n_pairs(self) -> int:
        return self.weights.shape[0].bit_length() - 1

    @classmethod
    def from_mapping(cls, weights: dict) -> "BellSpectrum":
        """Build from ``{(i_string, j_string): weight}``; missing entries are zero."""
        lengths = {len(s) for key in weights for s in key}
        if len(lengths) != 1:
            raise InvalidDistribution(f"bit strings of differing lengths {sorted(lengths)}")
        n = lengths.pop()
        w = np.zeros((2**n, 2**n))
        for (i, j), v in weights.items():
            w[int(i, 2), int(j, 2)] += v
        return cls(w)

    @classmethod
    def product(cls, per_pair: np.ndarray, n_pairs: int) -> "BellSpectrum":
        """i.i.d. spectrum from a single-pair 2x2 table ``per_pair[i, j]``."""
        w = np.ones((1, 1))
        for _ in range(n_pairs):
            w = np.kron(w, np.asarray(per_pair, dtype=float))
        return cls(w)

    @classmethod
    def random(cls, n_pairs: int, rng: np.random.Generator, concentration: float = 1.0) -> "BellSpectrum":
        size = 2**n_pairs
        return cls(rng.dirichlet(np.full(size * size, concentration)).reshape(size, size))


def _check_exact(s: BellSpectrum, limit: int = MAX_EXACT_PAIRS):
    if s.n_pairs > limit:
        raise TooLarge(f"n_pairs={s.n_pairs} exceeds {limit}")


def _log2_fsum_sq(values) -> float:
    return 2.0 * math.log2(math.fsum(values))


def bell_measure_x_hmin(s: BellSpectrum) -> float:
    """n - log2 sum_j (sum_i sqrt(lambda_ij))^2 for the X-basis key string."""
    _check_exact(s)
    roots = np.sqrt(s.weights)
    total = math.fsum(math.fsum(roots[:, j]) ** 2 for j in range(roots.shape[1]))
    return s.n_pairs - math.log2(total)


def marginalize_spectrum(s: BellSpectrum) -> float:
    """n - log2 (sum_i sqrt(lambda_i))^2 with lambda_i = sum_j lambda_ij."""
    _check_exact(s)
    marg = s.weights.sum(axis=1)
    return s.n_pairs - _log2_fsum_sq(math.sqrt(v) for v in marg)


def branch_guess_probs(s: BellSpectrum) -> np.ndarray:
    """Eve's (subnormalized) guessing probability in each j-branch, via the canonical-state bound.

    Each branch is itself a uniform CQ state whose profile is lambda_{., j}
    renormalized, so its guessing probability is P_j 2^(-H_min) with the
    min-entropy evaluated by :func:`minentropy.min_entropy_lb`.
    """
    _check_exact(s)
    out = np.zeros(s.weights.shape[1])
    for j in range(s.weights.shape[1]):
        mass = s.weights[:, j].sum()
        if mass > 0:
            out[j] = mass * 2.0 ** (-min_entropy_lb(s.weights[:, j] / mass))
    return out


def _pauli_string(i: int, j: int, n: int) -> np.ndarray:
    u = np.ones((1, 1), dtype=complex)
    for k in range(n):
        shift = n - 1 - k
        op = np.eye(2, dtype=complex)
        if (i >> shift) & 1:
            op = op @ _X
        if (j >> shift) & 1:
            op = op @ _Z
        u = np.kron(u, op)
    return u


def explicit_cq_state(s: BellSpectrum, key_basis: str = "x") -> CQState:
    """CQ state of Alice's measured string and Eve's purifying system, built from state vectors.

    Eve holds sum_ij sqrt(lambda_ij) |Phi_ij> |e_ij>; Alice measures every pair
    in ``key_basis`` and Bob's system is traced out.
    """
    if key_basis not in ("x", "z"):
        raise OutOfRange(f"key_basis must be 'x' or 'z', got {key_basis!r}")
    _check_exact(s, MAX_EXPLICIT_PAIRS)
    n = s.n_pairs
    size = 2**n
    basis = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        basis = np.kron(basis, _H if key_basis == "x" else np.eye(2))
    ops = np.stack([_pauli_string(i, j, n) for i in range(size) for j in range(size)])
    amp = np.sqrt(s.weights).reshape(-1)
    states = []
    for x in range(size):
        # <b_x|_A |Phi+>^n = conj(b_x) / sqrt(size) on Bob's side
        bob = basis[:, x].conj() / np.sqrt(size)
        m = (ops @ bob).T * amp  # (bob index, eve index)
        states.append(m.T @ m.conj())
    return CQState.from_subnormalized(np.stack(states))


@dataclass(frozen=True)
class Bb84Sample:
    e_x: float
    e_z: float
    phase_error: float  # fraction of X-sifted pairs that carry a Z-type error
    counts: dict = field(default_factory=dict)


def simulate_bb84(n_pairs: int, depol: float, seed: int, p_x: float = 0.5) -> Bb84Sample:
    """Depolarized EPR pairs, independent basis choices with P(X) = p_x, sifting and error counting."""
    n_pairs = _as_count(n_pairs, "n_pairs")
    if not 0.0 <= depol <= 1.0:
        raise OutOfRange(f"depol={depol!r} not in [0, 1]")
    rng = np.random.default_rng(seed)
    q = depol
    # Bell index order (i, j) = 00, 10, 01, 11
    idx = rng.choice(4, size=n_pairs, p=[1 - 0.75 * q, 0.25 * q, 0.25 * q, 0.25 * q])
    i_err = (idx == 1) | (idx == 3)
    j_err = (idx == 2) | (idx == 3)
    alice_x = rng.random(n_pairs) < p_x
    bob_x = rng.random(n_pairs) < p_x
    sx = alice_x & bob_x
    sz = ~alice_x & ~bob_x
    n_x, n_z = int(sx.sum()), int(sz.sum())
    err_x = int((j_err & sx).sum())
    err_z = int((i_err & sz).sum())
    hidden = int((i_err & sx).sum())
    counts = {"pairs": n_pairs, "n_x": n_x, "n_z": n_z, "err_x": err_x, "err_z": err_z, "phase_err_x": hidden}
    return Bb84Sample(
        e_x=err_x / n_x if n_x else 0.0,
        e_z=err_z / n_z if n_z else 0.0,
        phase_error=hidden / n_x if n_x else 0.0,
        counts=counts,
    )
