"""Small dense complex linear algebra: Hermitian eigensolvers, fidelity, trace norm.

Matrices are plain ``numpy`` arrays of shape (dim, dim). Functions never
mutate their arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, InvalidState, NoConvergence, NotHermitian

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9
TRACE_TOL = 1e-9
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class EigDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidState("matrix has non-finite entries")
    return a


def hermitian_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def check_hermitian(m, tol: float = HERMITIAN_TOL) -> np.ndarray:
    a = as_matrix(m)
    err = hermitian_defect(a)
    if err > tol:
        raise NotHermitian(f"max |A - A^dagger| = {err:.3e} exceeds {tol:.1e}")
    return a


def _canonical_order(w: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fix eigenvector phases and a reproducible order within degenerate groups."""
    v = v.copy()
    for c in range(v.shape[1]):
        col = v[:, c]
        k = int(np.argmax(np.abs(col) > 1e-12 * max(1.0, np.abs(col).max())))
        phase = col[k] / abs(col[k])
        v[:, c] = col / phase
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    # degenerate groups: descending lexicographic order on (real, imag) components
    start = 0
    n = len(w)
    while start < n:
        stop = start + 1
        while stop < n and abs(w[stop] - w[start]) <= _TIE_TOL * max(1.0, abs(w[start])):
            stop += 1
        if stop - start > 1:
            cols = list(range(start, stop))
            keys = {c: tuple(x for z in np.round(v[:, c], 12) for x in (z.real, z.imag)) for c in cols}
            cols.sort(key=keys.__getitem__, reverse=True)
            v[:, start:stop] = v[:, cols]
        start = stop
    return w, v


def jacobi_eigh(m, max_sweeps: int | None = None, tol: float = 1e-15) -> EigDecomposition:
    """Cyclic complex Jacobi diagonalization of a Hermitian matrix.

    The rotation budget is ``100 * dim**2``; exhausting it raises ``NoConvergence``.
    """
    a = check_hermitian(m).copy()
    a = 0.5 * (a + a.conj().T)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    budget = 100 * n * n if max_sweeps is None else max_sweeps * n * n
    scale = max(float(np.abs(a).max()), 1e-300)
    rotations = 0
    while True:
        off = np.abs(a - np.diag(np.diag(a)))
        if off.max(initial=0.0) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= tol * scale:
                    continue
                rotations += 1
                if rotations > budget:
                    raise NoConvergence(f"Jacobi exceeded {budget} rotations")
                phase = apq / r
                app, aqq = a[p, p].real, a[q, q].real
                tau = (aqq - app) / (2.0 * r)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # U acts on the (p, q) plane: diag(1, conj(phase)) followed by a real rotation
                u = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ u
                a[idx, :] = u.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ u
    w, vec = _canonical_order(np.real(np.diag(a)).copy(), v)
    return EigDecomposition(w, vec)


def eig_hermitian(m, method: str = "lapack") -> EigDecomposition:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    ``method="lapack"`` uses ``numpy.linalg.eigh``; ``method="jacobi"`` uses the
    in-house cyclic Jacobi solver. Both return phase-canonicalized eigenvectors.
    """
    a = check_hermitian(m)
    if method == "jacobi":
        return jacobi_eigh(a)
    if method != "lapack":
        raise ValueError(f"unknown method {method!r}")
    try:
        w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NoConvergence(str(exc)) from exc
    w, v = _canonical_order(w, v)
    return EigDecomposition(w, v)


def eigvalsh(m) -> np.ndarray:
    a = check_hermitian(m)
    return np.linalg.eigvalsh(0.5 * (a + a.conj().T))


def density_matrix(m, tol: float = PSD_TOL) -> np.ndarray:
    """Validate ``m`` as a density matrix and return a cleaned copy.

    Eigenvalues in ``[-tol, 0)`` are clipped to zero and the trace renormalized;
    anything more negative raises ``InvalidState``.
    """
    a = check_hermitian(m)
    tr = np.trace(a).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidState(f"trace {tr!r} is not 1")
    a = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(a)
    if w[0] < -tol:
        raise InvalidState(f"negative eigenvalue {w[0]:.3e}")
    if w[0] < 0:
        w = np.clip(w, 0.0, None)
        w = w / w.sum()
        a = (v * w) @ v.conj().T
    return a


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj()) / np.vdot(psi, psi).real


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    # eigenvalues below solver resolution are treated as exact zeros
    w = np.where(w > 1e-14 * max(float(np.abs(w).max()), 1e-300), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(a, b) -> float:
    """Root fidelity Tr sqrt(sqrt(a) b sqrt(a)), clipped to [0, 1].

    Evaluated as the trace norm of sqrt(a) sqrt(b), which is better conditioned
    for low-rank inputs than the nested square root.
    """
    a = check_hermitian(a)
    b = check_hermitian(b)
    if a.shape != b.shape:
        raise DimMismatch(f"{a.shape} vs {b.shape}")
    s = np.linalg.svd(psd_sqrt(a) @ psd_sqrt(b), compute_uv=False)
    return min(max(float(np.sum(s)), 0.0), 1.0)


def trace_norm(m) -> float:
    return float(np.sum(np.abs(eigvalsh(m))))


def is_psd(m, tol: float = 0.0) -> bool:
    return bool(eigvalsh(m)[0] >= -tol)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (g + g.conj().T)
