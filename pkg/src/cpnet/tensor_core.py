"""Dense matrix kernel: vec/mat, Kronecker products, reshuffle, selections, eig.

All matrices are float64 numpy arrays. ``vec`` is column-major throughout so
that ``vec(A @ W @ B) == kron(B.T, A) @ vec(W)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ShapeError

JACOBI_MAX_SWEEPS = 100
JACOBI_OFF_TOL = 1e-12
ASYMMETRY_TOL = 1e-8
RANK_TOL = 1e-8
# matrices larger than this go to LAPACK under method="auto"
AUTO_JACOBI_MAX_N = 24


def as_matrix(a, name="matrix") -> np.ndarray:
    m = np.array(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def vec(m) -> np.ndarray:
    """Stack the columns of ``m`` into a 1-D array."""
    return np.asarray(m, dtype=float).reshape(-1, order="F")


def mat(x, rows: int, cols: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec`. ``cols`` defaults to ``rows``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if cols is None:
        cols = rows
    if x.size != rows * cols:
        raise ShapeError(f"cannot reshape length {x.size} into {rows}x{cols}")
    return x.reshape(rows, cols, order="F")


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def _side(m: np.ndarray) -> int:
    n = m.shape[0]
    d = int(round(np.sqrt(n)))
    if m.ndim != 2 or m.shape != (n, n) or d * d != n:
        raise ShapeError(f"expected a d^2 x d^2 matrix, got shape {m.shape}")
    return d


def reshuffle(m, d: int | None = None) -> np.ndarray:
    """Regroup a d^2 x d^2 matrix so that ``R(M)[(i,k),(j,l)] = M[(i,j),(k,l)]``.

    Pairs are flattened column-major, ``(i, j) -> i + j*d``, the same rule
    ``vec`` uses. With that choice ``R`` is an involution and
    ``<R(M), kron(W, W)> == <M, outer(vec(W), vec(W))>`` for any square W.
    """
    m = np.asarray(m, dtype=float)
    side = _side(m)
    if d is not None and d != side:
        raise ShapeError(f"matrix is {m.shape}, not {d * d}x{d * d}")
    d = side
    # axes after reshape(order="F"): (i, j, k, l) with row=(i,j), col=(k,l)
    t = m.reshape(d, d, d, d, order="F")
    return t.transpose(0, 2, 1, 3).reshape(d * d, d * d, order="F")


def delta_operator(d: int) -> np.ndarray:
    """Sum of E_ij (x) E_ij over all i, j; satisfies <Delta, A (x) B> = <A, B>."""
    if d < 1:
        raise ValueError("d must be >= 1")
    out = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            out[i * d + i, j * d + j] = 1.0
    return out


def unit_matrix(i: int, j: int, d: int) -> np.ndarray:
    e = np.zeros((d, d))
    e[i, j] = 1.0
    return e


@dataclass(frozen=True)
class SelectionPair:
    P_u: np.ndarray
    P_v: np.ndarray

    @property
    def d(self) -> int:
        return self.P_u.shape[0]


def selection_pair(d_N: int, d_0: int) -> SelectionPair:
    if d_N < 1 or d_0 < 1:
        raise ValueError("d_N and d_0 must be >= 1")
    d = d_N + d_0
    P_u = np.zeros((d, d_N))
    P_u[:d_N, :] = np.eye(d_N)
    P_v = np.zeros((d, d_0))
    P_v[d_N:, :] = np.eye(d_0)
    return SelectionPair(P_u, P_v)


@dataclass(frozen=True)
class SymEigResult:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def symmetrize(a, name="matrix") -> np.ndarray:
    a = as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"{name} must be square, got {a.shape}")
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > ASYMMETRY_TOL * max(scale, 1e-300):
        raise ValueError(f"{name} is not symmetric (asymmetry beyond {ASYMMETRY_TOL:g} relative)")
    return 0.5 * (a + a.T)


def _jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    scale = max(np.linalg.norm(a), 1e-300)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= JACOBI_OFF_TOL * scale:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise ConvergenceError(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")


def sym_eig(a, method: str = "auto") -> SymEigResult:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    ``method`` is ``"jacobi"`` (cyclic Jacobi rotations), ``"lapack"``
    (``numpy.linalg.eigh``) or ``"auto"``, which uses Jacobi up to
    ``AUTO_JACOBI_MAX_N`` rows. Each eigenvector is sign-normalized so its
    first entry above 1e-12 in magnitude is positive; ties keep column order.
    """
    a = symmetrize(a)
    n = a.shape[0]
    if method == "auto":
        method = "jacobi" if n <= AUTO_JACOBI_MAX_N else "lapack"
    if method == "jacobi":
        w, v = _jacobi(a)
    elif method == "lapack":
        w, v = np.linalg.eigh(a)
    else:
        raise ValueError(f"unknown eig method {method!r}")
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
        raise ConvergenceError("eigendecomposition produced non-finite values")
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    for k in range(n):
        col = v[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            v[:, k] = -col
    return SymEigResult(w, v)


def psd_project(a, method: str = "auto") -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clamped)."""
    res = sym_eig(a, method)
    w = np.clip(res.eigenvalues, 0.0, None)
    v = res.eigenvectors
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


def min_eig(a, method: str = "auto") -> float:
    return float(sym_eig(a, method).eigenvalues[-1])


def numerical_rank(a, tol: float = RANK_TOL, method: str = "auto") -> int:
    """Number of eigenvalues above ``tol * max(1, lambda_max)``."""
    w = sym_eig(a, method).eigenvalues
    cut = tol * max(1.0, float(w[0]) if w.size else 0.0)
    return int(np.sum(w > cut))


def frob_inner(a, b) -> float:
    return float(np.sum(np.asarray(a, dtype=float) * np.asarray(b, dtype=float)))
