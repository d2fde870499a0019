"""Block-PSD lifting of a factor pair and the complementarity form of the rank bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotPSDError, RankError, ShapeError
from .linnet import FactorPoint, ProblemInstance
from .report import ConstraintReport, ReportBuilder
from .tensor_core import (
    RANK_TOL,
    SelectionPair,
    as_matrix,
    frob_inner,
    numerical_rank,
    selection_pair,
    sym_eig,
)

PSD_TOL = 1e-9


def psd_slack(a: np.ndarray) -> float:
    """Smallest eigenvalue divided by ``max(1, ||a||_F)``."""
    a = np.asarray(a, dtype=float)
    return float(sym_eig(a).eigenvalues[-1]) / max(1.0, float(np.linalg.norm(a)))


@dataclass(frozen=True)
class BlockLift:
    """``W = [U; V][U; V]^T`` with blocks ``A = UU^T``, ``B = VV^T``, ``M = UV^T``."""

    W: np.ndarray
    sel: SelectionPair

    @property
    def A(self) -> np.ndarray:
        return self.sel.P_u.T @ self.W @ self.sel.P_u

    @property
    def B(self) -> np.ndarray:
        return self.sel.P_v.T @ self.W @ self.sel.P_v

    @property
    def M(self) -> np.ndarray:
        return self.sel.P_u.T @ self.W @ self.sel.P_v


@dataclass(frozen=True)
class ComplementarityTriple:
    W: np.ndarray
    W_prime: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        mats = [as_matrix(m, name) for m, name in ((self.W, "W"), (self.W_prime, "W_prime"), (self.S, "S"))]
        shapes = {m.shape for m in mats}
        if len(shapes) != 1 or mats[0].shape[0] != mats[0].shape[1]:
            raise ShapeError(f"triple blocks must be equal square shapes, got {sorted(shapes)}")
        for name, m in zip(("W", "W_prime", "S"), mats):
            object.__setattr__(self, name, m)

    @property
    def d(self) -> int:
        return self.W.shape[0]


def lift_to_block(p: FactorPoint) -> BlockLift:
    Z = np.vstack([p.U, p.V])
    W = Z @ Z.T
    return BlockLift(0.5 * (W + W.T), selection_pair(p.U.shape[0], p.V.shape[0]))


def factor_block(W, r: int, d_N: int, rank_tol: float = RANK_TOL) -> FactorPoint:
    """Split a PSD matrix of rank <= r into ``(U, V)`` with ``[U; V][U; V]^T ~= W``."""
    W = as_matrix(W, "W")
    d = W.shape[0]
    if not 0 < d_N < d:
        raise ShapeError(f"d_N={d_N} must split a {d}x{d} matrix")
    res = sym_eig(W)
    scale = max(1.0, float(np.linalg.norm(W)))
    if res.eigenvalues[-1] < -PSD_TOL * scale:
        raise NotPSDError(f"W has eigenvalue {res.eigenvalues[-1]:.3e}")
    rank = numerical_rank(W, rank_tol)
    if rank > r:
        raise RankError(f"numerical rank {rank} exceeds r={r}")
    k = min(r, d)
    lam = np.clip(res.eigenvalues[:k], 0.0, None)
    Z = np.zeros((d, r))
    Z[:, :k] = res.eigenvectors[:, :k] * np.sqrt(lam)
    return FactorPoint(Z[:d_N], Z[d_N:])


def rank_sdp_objective(W, inst: ProblemInstance) -> float:
    W = as_matrix(W, "W")
    if W.shape != (inst.d, inst.d):
        raise ShapeError(f"W is {W.shape}, expected {inst.d}x{inst.d}")
    sel = selection_pair(inst.d_N, inst.d_0)
    R = sel.P_u.T @ W @ sel.P_v @ inst.X - inst.Y
    return float(np.sum(R * R) / (2 * inst.n))


def projector_witness(W, r: int, rank_tol: float = RANK_TOL) -> ComplementarityTriple:
    """Projector onto an r-dimensional subspace containing the range of W.

    Uses the top-r eigenvectors of W in descending order; when rank(W) < r the
    remaining directions are the next eigenvectors (eigenvalue 0) in the same
    deterministic order.
    """
    W = as_matrix(W, "W")
    d = W.shape[0]
    if not 0 <= r <= d:
        raise RankError(f"r={r} outside 0..{d}")
    rank = numerical_rank(W, rank_tol)
    if rank > r:
        raise RankError(f"numerical rank {rank} exceeds r={r}")
    V = sym_eig(W).eigenvectors[:, :r]
    Wp = V @ V.T
    Wp = 0.5 * (Wp + Wp.T)
    return ComplementarityTriple(W, Wp, np.eye(d) - Wp)


def check_complementarity(t: ComplementarityTriple, r: int, tol: float = 1e-8) -> ConstraintReport:
    """Residuals of the complementarity system for ``(W, W', S)``."""
    d = t.d
    b = ReportBuilder()
    b.eq("trace(W') - r", np.trace(t.W_prime) - r, tol)
    b.eq("max|W' + S - I|", np.max(np.abs(t.W_prime + t.S - np.eye(d))), tol)
    b.ge("min eig W (scaled)", psd_slack(t.W), tol)
    b.ge("min eig W' (scaled)", psd_slack(t.W_prime), tol)
    b.ge("min eig S (scaled)", psd_slack(t.S), tol)
    b.eq("<W, S>", frob_inner(t.W, t.S), tol, note="complementarity")
    return b.build()
