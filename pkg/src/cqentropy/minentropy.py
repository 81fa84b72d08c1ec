"""Min-entropy of classical-quantum states.

A CQ state sum_x p_x |x><x| (x) tau_x is reduced to a uniform CQ state whose
adversary states are |Psi_x> = sum_y w^(xy) sqrt(lambda_y) |e_y>. The
min-entropy of that canonical state is log d - log (sum_y sqrt(lambda_y))^2
and lower-bounds the min-entropy of the original state. The module also
provides exact and heuristic discrimination oracles used to check the bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qmath
from .errors import (
    DimMismatch,
    DimTooLarge,
    InvalidDistribution,
    InvalidPovm,
    InvalidProfile,
    NotBinary,
)

PROB_TOL = 1e-9
POVM_PSD_TOL = 1e-9
POVM_SUM_TOL = 1e-8


def root_of_unity(d: int) -> complex:
    return np.exp(2j * np.pi / d)


def fourier_matrix(d: int) -> np.ndarray:
    """Columns are (1/sqrt d) sum_y w^(xy) |y>, x = 0..d-1."""
    y = np.arange(d)
    return root_of_unity(d) ** np.outer(y, y) / np.sqrt(d)


def _check_probs(probs, exc) -> np.ndarray:
    p = np.asarray(probs, dtype=float).ravel()
    if p.size < 1 or not np.all(np.isfinite(p)):
        raise exc("empty or non-finite probability vector")
    if p.min() < -PROB_TOL:
        raise exc(f"negative entry {p.min():.3e}")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise exc(f"entries sum to {p.sum()!r}, not 1")
    return np.clip(p, 0.0, None)


@dataclass(frozen=True)
class CQState:
    """Classical distribution ``probs`` with adversary states ``cond_states[x]``."""

    probs: np.ndarray
    cond_states: np.ndarray  # shape (d, D, D)

    def __post_init__(self):
        p = _check_probs(self.probs, InvalidDistribution)
        states = [qmath.density_matrix(t) for t in self.cond_states]
        if len(states) != p.size:
            raise DimMismatch(f"{p.size} probabilities but {len(states)} states")
        dims = {t.shape for t in states}
        if len(dims) != 1:
            raise DimMismatch(f"conditional states have differing shapes {sorted(dims)}")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "cond_states", np.stack(states))

    @property
    def d(self) -> int:
        return self.probs.size

    @property
    def dim(self) -> int:
        return self.cond_states.shape[1]

    def weighted(self) -> np.ndarray:
        """The operators p_x tau_x, shape (d, D, D)."""
        return self.probs[:, None, None] * self.cond_states

    @classmethod
    def from_pure(cls, probs, vectors) -> "CQState":
        return cls(np.asarray(probs, dtype=float), np.stack([qmath.pure_state(v) for v in vectors]))

    @classmethod
    def from_subnormalized(cls, ops) -> "CQState":
        """Build from unnormalized operators p_x tau_x (zero operators allowed)."""
        ops = np.asarray(ops, dtype=complex)
        probs = np.array([np.trace(o).real for o in ops])
        total = probs.sum()
        states = []
        for o, w in zip(ops, probs):
            states.append(o / w if w > 1e-15 else np.eye(o.shape[0]) / o.shape[0])
        return cls(probs / total, np.stack(states))


@dataclass(frozen=True)
class EigProfile:
    """Nonnegative weights lambda_y summing to one."""

    lambdas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lambdas", _check_probs(self.lambdas, InvalidProfile))

    @property
    def d(self) -> int:
        return self.lambdas.size


@dataclass(frozen=True)
class Povm:
    elements: np.ndarray  # shape (d, D, D)

    def __post_init__(self):
        el = np.asarray(self.elements, dtype=complex)
        if el.ndim != 3 or el.shape[1] != el.shape[2]:
            raise InvalidPovm(f"bad element array shape {el.shape}")
        for m in el:
            if qmath.hermitian_defect(m) > POVM_SUM_TOL or not qmath.is_psd(m, POVM_PSD_TOL):
                raise InvalidPovm("element is not positive semidefinite")
        err = np.abs(el.sum(axis=0) - np.eye(el.shape[1])).max()
        if err > POVM_SUM_TOL:
            raise InvalidPovm(f"elements sum to identity only within {err:.3e}")
        object.__setattr__(self, "elements", el)

    def __len__(self) -> int:
        return self.elements.shape[0]


def _as_profile(profile) -> EigProfile:
    return profile if isinstance(profile, EigProfile) else EigProfile(np.asarray(profile, dtype=float))


def purify(tau: np.ndarray) -> np.ndarray:
    """Purification sum_j sqrt(mu_j) |v_j> (x) |j> as a vector of length D^2."""
    dec = qmath.eig_hermitian(tau)
    mu = np.clip(dec.eigenvalues, 0.0, None)
    # column j of (V sqrt(mu)) is sqrt(mu_j)|v_j>; row-major flatten puts E first, reference second
    return (dec.eigenvectors * np.sqrt(mu)).reshape(-1)


def uniformize_vectors(state: CQState) -> np.ndarray:
    """Vectors sqrt(lambda_y)|e_y> = (1/sqrt d) sum_z w^(-yz) sqrt(p_z)|psi_z>, one per row."""
    d = state.d
    psi = np.stack([purify(t) for t in state.cond_states])
    psi = np.sqrt(state.probs)[:, None] * psi
    y = np.arange(d)
    kernel = root_of_unity(d) ** (-np.outer(y, y)) / np.sqrt(d)
    return kernel @ psi


def uniformize(state: CQState) -> EigProfile:
    """Eigenvalue profile of the uniform CQ state that lower-bounds ``state``."""
    vecs = uniformize_vectors(state)
    lam = np.sum(np.abs(vecs) ** 2, axis=1)
    return EigProfile(lam / lam.sum())


def build_uniform_cq(profile) -> CQState:
    """Canonical state: p_x = 1/d, tau_x = |Psi_x><Psi_x| in the basis {|e_y>}."""
    prof = _as_profile(profile)
    d = prof.d
    y = np.arange(d)
    psi = root_of_unity(d) ** np.outer(y, y) * np.sqrt(prof.lambdas)[None, :]
    states = np.einsum("xi,xj->xij", psi, psi.conj())
    return CQState(np.full(d, 1.0 / d), states)


def sqrt_sum(profile) -> float:
    prof = _as_profile(profile)
    # fsum is correctly rounded, so the result does not depend on entry order
    return math.fsum(math.sqrt(v) for v in prof.lambdas)


def guess_prob_bound(profile) -> float:
    """(sum_y sqrt(lambda_y))^2 / d, the guessing probability of the canonical state."""
    prof = _as_profile(profile)
    return min(sqrt_sum(prof) ** 2 / prof.d, 1.0)


def min_entropy_lb(profile) -> float:
    """log2 d - log2 (sum_y sqrt(lambda_y))^2, in [0, log2 d]."""
    prof = _as_profile(profile)
    h = math.log2(prof.d) - 2.0 * math.log2(sqrt_sum(prof))
    return min(max(h, 0.0), math.log2(prof.d))


def optimal_povm(profile) -> Povm:
    """Projectors onto (1/sqrt d) sum_y w^(xy) |e_y>."""
    d = _as_profile(profile).d
    f = fourier_matrix(d)
    return Povm(np.einsum("ix,jx->xij", f, f.conj()))


def _check_pair(state: CQState, povm: Povm):
    if len(povm) != state.d:
        raise DimMismatch(f"POVM has {len(povm)} outcomes, state has {state.d}")
    if povm.elements.shape[1] != state.dim:
        raise DimMismatch(f"POVM acts on dimension {povm.elements.shape[1]}, state on {state.dim}")


def guess_prob(state: CQState, povm: Povm) -> float:
    """sum_x p_x Tr[M_x tau_x]."""
    _check_pair(state, povm)
    val = np.einsum("xij,xji->", state.weighted(), povm.elements).real
    return float(min(val, 1.0))


def helstrom(state: CQState) -> float:
    """Exact optimal guessing probability for two hypotheses."""
    if state.d != 2:
        raise NotBinary(f"helstrom needs d = 2, got {state.d}")
    w = state.weighted()
    return 0.5 * (1.0 + qmath.trace_norm(w[0] - w[1]))


def helstrom_povm(state: CQState) -> Povm:
    """Projectors onto the nonnegative / negative eigenspaces of p0 tau0 - p1 tau1."""
    if state.d != 2:
        raise NotBinary(f"helstrom needs d = 2, got {state.d}")
    w = state.weighted()
    dec = qmath.eig_hermitian(w[0] - w[1])
    v = dec.eigenvectors
    pos = v[:, dec.eigenvalues >= 0]
    m0 = pos @ pos.conj().T
    return Povm(np.stack([m0, np.eye(state.dim) - m0]))


def square_root_povm(state: CQState) -> Povm:
    """Square-root (pretty good) measurement, completed on the kernel of sum_x p_x tau_x."""
    w = state.weighted()
    rho = w.sum(axis=0)
    ev, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    # tiny eigenvalues amplify rounding in rho^(-1/2); treat them as kernel
    keep = ev > 1e-8 * ev.max()
    vs = v[:, keep]
    inv_sqrt = (vs / np.sqrt(ev[keep])) @ vs.conj().T
    el = np.einsum("ij,xjk,kl->xil", inv_sqrt, w, inv_sqrt)
    el = 0.5 * (el + np.conj(np.transpose(el, (0, 2, 1))))
    el[0] += np.eye(state.dim) - vs @ vs.conj().T
    return Povm(el)


def dual_certificate(state: CQState, povm: Povm, tol: float = 1e-8) -> bool:
    """Check optimality: Y = sum_x p_x tau_x M_x Hermitian and Y - p_x tau_x >= 0 for all x."""
    _check_pair(state, povm)
    w = state.weighted()
    y = np.einsum("xij,xjk->ik", w, povm.elements)
    if qmath.hermitian_defect(y) > tol:
        return False
    y = 0.5 * (y + y.conj().T)
    return all(qmath.is_psd(y - wx, tol) for wx in w)


ASCENT_SWEEPS = 20


def _pair_ascent(w: np.ndarray, basis: np.ndarray, assign: np.ndarray) -> None:
    """One sweep of exact 2x2 block ascent over all basis pairs (in place).

    Each block is re-optimized over every ordered pair of outcomes, so the
    number of basis vectors assigned to each outcome can change.
    """
    dim = basis.shape[1]
    for k in range(dim - 1):
        for l in range(k + 1, dim):
            pair = basis[:, [k, l]]
            blocks = np.einsum("ia,xij,jb->xab", pair.conj(), w, pair)
            traces = (blocks[:, 0, 0] + blocks[:, 1, 1]).real
            # top eigenvalue of B_x - B_y in closed form, for all (x, y) at once
            diff = blocks[:, None] - blocks[None, :]
            half = 0.5 * (diff[..., 0, 0] - diff[..., 1, 1]).real
            off = np.abs(0.5 * (diff[..., 0, 1] + diff[..., 1, 0].conj()))
            top = 0.5 * (diff[..., 0, 0] + diff[..., 1, 1]).real + np.hypot(half, off)
            split = top + traces[None, :]
            x, y = np.unravel_index(np.argmax(split), split.shape)
            if split[x, y] <= traces.max() + 1e-15:
                assign[k] = assign[l] = int(np.argmax(traces))
                continue
            _, vec = np.linalg.eigh(0.5 * (diff[x, y] + diff[x, y].conj().T))
            # top eigenvector goes to x, the other to y
            basis[:, [k, l]] = pair @ vec[:, ::-1]
            assign[k], assign[l] = x, y


def _projective_value(w: np.ndarray, basis: np.ndarray) -> tuple[float, np.ndarray]:
    diag = np.einsum("ik,xij,jk->xk", basis.conj(), w, basis).real  # (d, D)
    assign = np.argmax(diag, axis=0)
    return float(diag[assign, np.arange(basis.shape[1])].sum()), assign


def _projective_povm(basis: np.ndarray, assign: np.ndarray, d: int) -> np.ndarray:
    el = np.zeros((d, basis.shape[0], basis.shape[0]), dtype=complex)
    for k, x in enumerate(assign):
        el[x] += np.outer(basis[:, k], basis[:, k].conj())
    return el


def _fixed_point_refine(w: np.ndarray, el: np.ndarray, iters: int) -> tuple[float, np.ndarray]:
    """Iterate M_x <- G^(-1/2) W_x M_x W_x G^(-1/2), G = sum_x W_x M_x W_x; keep the best iterate."""
    dim = w.shape[1]
    best_val = float(np.einsum("xij,xji->", w, el).real)
    best = el
    for _ in range(iters):
        t = np.einsum("xij,xjk,xkl->xil", w, el, w)
        g = t.sum(axis=0)
        ev, v = np.linalg.eigh(0.5 * (g + g.conj().T))
        if ev.max() <= 0:
            break
        keep = ev > 1e-12 * ev.max()
        vs = v[:, keep]
        inv_sqrt = (vs / np.sqrt(ev[keep])) @ vs.conj().T
        el = np.einsum("ij,xjk,kl->xil", inv_sqrt, t, inv_sqrt)
        el = 0.5 * (el + np.conj(np.transpose(el, (0, 2, 1))))
        el[0] += np.eye(dim) - vs @ vs.conj().T
        # an ill-conditioned G can push iterates off the POVM set; stop there
        if np.linalg.eigvalsh(el).min() < -1e-11 or np.abs(el.sum(axis=0) - np.eye(dim)).max() > 1e-10:
            break
        val = float(np.einsum("xij,xji->", w, el).real)
        if val > best_val + 1e-15:
            gain = val - best_val
            best_val, best = val, el
            if gain < 1e-13:
                break
    return best_val, best


def povm_search_result(state: CQState, restarts: int = 8, iters: int = 200, seed: int = 0) -> tuple[float, Povm]:
    """Heuristic maximization of the guessing probability; returns (value, POVM).

    Candidates: guessing the likeliest symbol, the square-root measurement, and
    seeded random rank-one projective measurements improved by 2x2 block ascent.
    The best candidate is polished by a monotone fixed-point iteration. Every
    candidate is a valid POVM, so the value never exceeds the true optimum.
    """
    d, dim = state.d, state.dim
    if d > 8 or dim > 16:
        raise DimTooLarge(f"povm_search supports d <= 8 and dim <= 16, got d={d}, dim={dim}")
    w = state.weighted()
    rng = np.random.default_rng(seed)

    x0 = int(np.argmax(state.probs))
    best_el = np.zeros((d, dim, dim), dtype=complex)
    best_el[x0] = np.eye(dim)
    best_val = float(state.probs[x0])

    srm = square_root_povm(state).elements
    val = float(np.einsum("xij,xji->", w, srm).real)
    if val > best_val:
        best_val, best_el = val, srm

    for _ in range(restarts):
        basis = qmath.random_unitary(dim, rng)
        val, assign = _projective_value(w, basis)
        # a few sweeps locate the basin; the fixed-point polish below converges it
        for _ in range(min(iters, ASCENT_SWEEPS)):
            _pair_ascent(w, basis, assign)
            new, assign = _projective_value(w, basis)
            done = new - val < 1e-10
            val = max(val, new)
            if done:
                break
        if val > best_val:
            best_val, best_el = val, _projective_povm(basis, assign, d)

    # projective iterates have zero eigendirections the multiplicative update
    # cannot leave, so polish from a full-rank mixture
    start = 0.9 * best_el + 0.1 * np.eye(dim)[None] / d
    val, el = _fixed_point_refine(w, start, 4 * iters)
    if val > best_val:
        best_val, best_el = val, el
    return min(best_val, 1.0), Povm(best_el)


def povm_search(state: CQState, restarts: int = 8, iters: int = 200, seed: int = 0) -> float:
    return povm_search_result(state, restarts, iters, seed)[0]


def exact_min_entropy(pguess: float) -> float:
    return -math.log2(pguess)
