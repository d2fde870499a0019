"""Lifted completely positive program for deep linear network training.

The decision vector is ``z = [vec(W); vec(W'); vec(S)]`` of length ``3 d^2``.
Points of the lifted program are pairs ``(z, Z)`` with ``Z`` standing in for
``z z^T``. Atoms are exact rank-one lifts of feasible triples; mixtures are
convex combinations of atoms and keep their decomposition so that membership
in the lifted cone is certified by construction. Points without a recorded
decomposition can only be checked against necessary PSD conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CpnetError, ShapeError
from .linnet import FactorPoint, ProblemInstance, oracle_opt
from .rank_sdp import ComplementarityTriple, lift_to_block, projector_witness, psd_slack
from .report import ConstraintReport, ReportBuilder
from .tensor_core import delta_operator, frob_inner, kron, mat, reshuffle, selection_pair, vec

OBJECTIVE_TOL = 1e-10


class NoAtomDecomposition(CpnetError, ValueError):
    """Kronecker blocks need the atoms a point was mixed from."""


@dataclass(frozen=True)
class ConeDescriptor:
    """``K = vec(S_+^d)^3`` and its augmentation ``R_+ x K``."""

    d: int

    @property
    def block_sizes(self) -> tuple[int, int, int]:
        return (self.d, self.d, self.d)

    def describe(self) -> str:
        d = self.d
        return f"K = vec(S+^{d}) x vec(S+^{d}) x vec(S+^{d}) in R^{3 * d * d}; K_hat = R+ x K"


@dataclass(frozen=True)
class FormulationData:
    Q: np.ndarray
    q: np.ndarray
    h: float
    Qbar: np.ndarray
    qbar: np.ndarray
    hbar: float
    A: np.ndarray
    b: np.ndarray
    cone: ConeDescriptor
    r: int

    @property
    def d(self) -> int:
        return self.cone.d

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.Q @ z + self.q @ z + self.h)

    def quadratic_constraint(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.Qbar @ z + self.qbar @ z + self.hbar)

    def lifted_objective(self, z, Z) -> float:
        return frob_inner(self.Q, Z) + float(self.q @ np.asarray(z, dtype=float)) + self.h

    def lifted_quadratic_constraint(self, z, Z) -> float:
        return frob_inner(self.Qbar, Z) + float(self.qbar @ np.asarray(z, dtype=float)) + self.hbar


def block_selectors(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m = d * d
    eye = np.eye(m)
    zero = np.zeros((m, m))
    return (
        np.hstack([eye, zero, zero]),
        np.hstack([zero, eye, zero]),
        np.hstack([zero, zero, eye]),
    )


def _objective_parts(inst: ProblemInstance) -> tuple[np.ndarray, np.ndarray]:
    """``kron(P_v X X^T P_v^T, P_u P_u^T)`` and ``vec(P_u Y X^T P_v^T)``."""
    sel = selection_pair(inst.d_N, inst.d_0)
    XXt = sel.P_v @ inst.X @ inst.X.T @ sel.P_v.T
    K = kron(XXt, sel.P_u @ sel.P_u.T)
    c = vec(sel.P_u @ inst.Y @ inst.X.T @ sel.P_v.T)
    return K, c


def assemble_qcqp(inst: ProblemInstance) -> FormulationData:
    d, n, r = inst.d, inst.n, inst.r
    R1, R2, R3 = block_selectors(d)
    K, c = _objective_parts(inst)
    Q = R1.T @ K @ R1 / (2 * n)
    q = -(R1.T @ c) / n
    h = float(np.sum(inst.Y * inst.Y) / (2 * n))
    Qbar = -0.5 * (R1.T @ R2 + R2.T @ R1)
    vec_eye = vec(np.eye(d))
    qbar = R1.T @ vec_eye
    A = np.vstack([(vec_eye @ R2)[None, :], R2 + R3])
    b = np.concatenate([[float(r)], vec_eye])
    return FormulationData(
        Q=0.5 * (Q + Q.T), q=q, h=h, Qbar=Qbar, qbar=qbar, hbar=0.0, A=A, b=b,
        cone=ConeDescriptor(d), r=r,
    )


@dataclass(frozen=True)
class LiftedPoint:
    z: np.ndarray
    Z: np.ndarray
    atoms: tuple[np.ndarray, ...] = field(default=())
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).reshape(-1)
        Z = np.asarray(self.Z, dtype=float)
        if Z.shape != (z.size, z.size):
            raise ShapeError(f"Z is {Z.shape}, expected {z.size}x{z.size}")
        d = int(round(np.sqrt(z.size / 3)))
        if 3 * d * d != z.size:
            raise ShapeError(f"z has length {z.size}, not 3 d^2")
        if len(self.atoms) != len(self.weights):
            raise ShapeError("atoms and weights differ in length")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "Z", 0.5 * (Z + Z.T))
        object.__setattr__(self, "atoms", tuple(np.asarray(a, dtype=float) for a in self.atoms))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def d(self) -> int:
        return int(round(np.sqrt(self.z.size / 3)))

    @property
    def certified(self) -> bool:
        """True when the point carries an explicit convex decomposition into atoms."""
        return bool(self.atoms)

    def part(self, k: int) -> np.ndarray:
        """First-order block ``z_k`` for k in 1..3."""
        m = self.d * self.d
        return self.z[(k - 1) * m : k * m]

    def block(self, i: int, j: int) -> np.ndarray:
        """Second-order block ``Z_ij`` for i, j in 1..3."""
        m = self.d * self.d
        return self.Z[(i - 1) * m : i * m, (j - 1) * m : j * m]

    def bordered(self) -> np.ndarray:
        top = np.concatenate([[1.0], self.z])
        out = np.empty((self.z.size + 1, self.z.size + 1))
        out[0, :] = top
        out[:, 0] = top
        out[1:, 1:] = self.Z
        return out


def triple_vector(t: ComplementarityTriple) -> np.ndarray:
    return np.concatenate([vec(t.W), vec(t.W_prime), vec(t.S)])


def atom_from_triple(t: ComplementarityTriple) -> LiftedPoint:
    z = triple_vector(t)
    return LiftedPoint(z, np.outer(z, z), atoms=(z,), weights=(1.0,))


def mix_atoms(points, weights) -> LiftedPoint:
    """Convex combination of lifted points; the atom decomposition is carried along."""
    points = list(points)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if not points or len(points) != w.size:
        raise ValueError("need one weight per point")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must be nonnegative and sum to 1, got sum {w.sum()!r}")
    dims = {p.z.size for p in points}
    if len(dims) != 1:
        raise ShapeError(f"points have different dimensions {sorted(dims)}")
    z = sum(wi * p.z for wi, p in zip(w, points))
    Z = sum(wi * p.Z for wi, p in zip(w, points))
    atoms, aw = [], []
    if all(p.certified for p in points):
        for wi, p in zip(w, points):
            for a, wa in zip(p.atoms, p.weights):
                atoms.append(a)
                aw.append(wi * wa)
    return LiftedPoint(z, Z, tuple(atoms), tuple(aw))


def eval_objective_vectorized(pt: LiftedPoint, inst: ProblemInstance) -> float:
    if pt.d != inst.d:
        raise ShapeError(f"point has d={pt.d}, instance d={inst.d}")
    K, c = _objective_parts(inst)
    quad = frob_inner(K, pt.block(1, 1))
    lin = float(c @ pt.part(1))
    return (quad - 2.0 * lin + float(np.sum(inst.Y * inst.Y))) / (2 * inst.n)


def vectorized_residuals(pt: LiftedPoint, r: int) -> dict[str, np.ndarray]:
    """Signed residuals of every affine/inequality family of the vectorized program."""
    d = pt.d
    vec_eye = vec(np.eye(d))
    z1, z2, z3 = pt.part(1), pt.part(2), pt.part(3)
    Z22 = pt.block(2, 2)
    sum4 = Z22 + pt.block(2, 3) + pt.block(3, 2) + pt.block(3, 3)
    return {
        "i": np.array([np.trace(mat(z2, d)) - r]),
        "ii": np.array([vec_eye @ Z22 @ vec_eye - r * r]),
        "iii": z2 + z3 - vec_eye,
        "iv": np.diag(sum4) - vec_eye,
        "v": np.array([np.trace(mat(z1, d)) - np.trace(pt.block(1, 2))]),
    }


FAMILY_LABELS = {
    "i": "(i) tr mat(z2) - r",
    "ii": "(ii) <vec(I)vec(I)^T, Z22> - r^2",
    "iii": "(iii) max|z2 + z3 - vec(I)|",
    "iv": "(iv) max|diag(Z22+Z23+Z32+Z33) - vec(I)|",
    "v": "(v) tr mat(z1) - tr Z12",
}


def _family_rows(b: ReportBuilder, res: dict[str, np.ndarray], tol: float):
    for key in ("i", "ii"):
        b.eq(FAMILY_LABELS[key], res[key][0], tol)
    for key in ("iii", "iv"):
        b.eq(FAMILY_LABELS[key], np.max(np.abs(res[key])), tol)
    b.le(FAMILY_LABELS["v"], res["v"][0], tol)


def check_constraints_vectorized(pt: LiftedPoint, inst: ProblemInstance, tol: float = 1e-8) -> ConstraintReport:
    if pt.d != inst.d:
        raise ShapeError(f"point has d={pt.d}, instance d={inst.d}")
    d = pt.d
    b = ReportBuilder()
    _family_rows(b, vectorized_residuals(pt, inst.r), tol)
    if pt.certified:
        # exact membership: the stored atoms reproduce the bordered matrix
        recon = sum(w * np.outer(np.concatenate([[1.0], a]), np.concatenate([[1.0], a])) for a, w in zip(pt.atoms, pt.weights))
        b.eq("(vi) atom decomposition error", np.max(np.abs(recon - pt.bordered())), tol, note="atom-certified")
        b.eq("(vi) weights sum - 1", sum(pt.weights) - 1.0, 1e-12, note="atom-certified")
        worst = min(
            min(psd_slack(mat(a[k * d * d : (k + 1) * d * d], d)) for k in range(3)) for a in pt.atoms
        )
        b.ge("(vi) min eig over atom blocks (scaled)", worst, tol, note="atom-certified")
    else:
        b.ge("(vi) bordered matrix PSD (scaled)", psd_slack(pt.bordered()), tol, note="surrogate")
        for k in (1, 2, 3):
            b.ge(f"(vi) mat(z{k}) PSD (scaled)", psd_slack(mat(pt.part(k), d)), tol, note="surrogate")
    return b.build()


def kron_blocks(pt: LiftedPoint) -> dict[tuple[int, int], np.ndarray]:
    """Matrix-indexed blocks ``W_ij = sum_a w_a omega_i (x) omega_j`` with ``omega_0 = 1``."""
    if not pt.certified:
        raise NoAtomDecomposition(
            "Kronecker blocks are defined through atoms; this point has no decomposition"
        )
    d = pt.d
    m = d * d
    blocks: dict[tuple[int, int], np.ndarray] = {(0, 0): np.array([[sum(pt.weights)]])}
    for a, w in zip(pt.atoms, pt.weights):
        omegas = [None] + [mat(a[k * m : (k + 1) * m], d) for k in range(3)]
        for j in (1, 2, 3):
            blocks[(0, j)] = blocks.get((0, j), 0.0) + w * omegas[j]
            blocks[(j, 0)] = blocks[(0, j)]
            for i in (1, 2, 3):
                blocks[(i, j)] = blocks.get((i, j), 0.0) + w * kron(omegas[i], omegas[j])
    return blocks


def eval_objective_kronecker(blocks, inst: ProblemInstance) -> float:
    K, _ = _objective_parts(inst)
    sel = selection_pair(inst.d_N, inst.d_0)
    C = sel.P_u @ inst.Y @ inst.X.T @ sel.P_v.T
    quad = frob_inner(reshuffle(K), blocks[(1, 1)])
    lin = frob_inner(C, blocks[(0, 1)])
    return (quad - 2.0 * lin + float(np.sum(inst.Y * inst.Y))) / (2 * inst.n)


def kronecker_residuals(blocks, r: int) -> dict[str, np.ndarray]:
    """Kronecker-form residuals, ordered like :func:`vectorized_residuals` (index i + j*d)."""
    W02, W03 = blocks[(0, 2)], blocks[(0, 3)]
    d = W02.shape[0]
    sum4 = blocks[(2, 2)] + blocks[(2, 3)] + blocks[(3, 2)] + blocks[(3, 3)]
    iii = np.empty(d * d)
    iv = np.empty(d * d)
    for j in range(d):
        for i in range(d):
            E = np.zeros((d, d))
            E[i, j] = 1.0
            delta = 1.0 if i == j else 0.0
            iii[i + j * d] = frob_inner(E, W02 + W03) - delta
            iv[i + j * d] = frob_inner(kron(E, E), sum4) - delta
    return {
        "i": np.array([np.trace(W02) - r]),
        "ii": np.array([np.trace(blocks[(2, 2)]) - r * r]),
        "iii": iii,
        "iv": iv,
        "v": np.array([np.trace(blocks[(0, 1)]) - frob_inner(delta_operator(d), blocks[(1, 2)])]),
    }


KRONECKER_LABELS = {
    "i": "(i) tr W02 - r",
    "ii": "(ii) tr W22 - r^2",
    "iii": "(iii) max|<E_ij, W02+W03> - delta_ij|",
    "iv": "(iv) max|<E_ij(x)E_ij, W22+W23+W32+W33> - delta_ij|",
    "v": "(v) tr W01 - <Delta, W12>",
}


def check_constraints_kronecker(pt: LiftedPoint, inst: ProblemInstance, tol: float = 1e-8) -> ConstraintReport:
    blocks = kron_blocks(pt)
    res = kronecker_residuals(blocks, inst.r)
    b = ReportBuilder()
    for key in ("i", "ii"):
        b.eq(KRONECKER_LABELS[key], res[key][0], tol)
    for key in ("iii", "iv"):
        b.eq(KRONECKER_LABELS[key], np.max(np.abs(res[key])), tol)
    b.le(KRONECKER_LABELS["v"], res["v"][0], tol)
    o1 = eval_objective_vectorized(pt, inst)
    o2 = eval_objective_kronecker(blocks, inst)
    b.eq("objective(Kronecker) - objective(vectorized)", o2 - o1, OBJECTIVE_TOL * max(1.0, abs(o1)))
    return b.build()


def random_factor(inst: ProblemInstance, rng: np.random.Generator, scale: float = 1.0) -> FactorPoint:
    return FactorPoint(
        scale * rng.standard_normal((inst.d_N, inst.r)),
        scale * rng.standard_normal((inst.d_0, inst.r)),
    )


def atom_from_factor(p: FactorPoint, r: int) -> LiftedPoint:
    """Lift -> projector witness -> atom."""
    return atom_from_triple(projector_witness(lift_to_block(p).W, r))


def factor_of(M: np.ndarray, r: int) -> FactorPoint:
    """Balanced rank-r factorization ``M = U V^T`` via SVD (M must have rank <= r)."""
    u, s, vt = np.linalg.svd(M, full_matrices=False)
    k = min(r, s.size)
    root = np.sqrt(s[:k])
    U = np.zeros((M.shape[0], r))
    V = np.zeros((M.shape[1], r))
    U[:, :k] = u[:, :k] * root
    V[:, :k] = vt[:k].T * root
    return FactorPoint(U, V)


def optimal_atom(inst: ProblemInstance) -> tuple[LiftedPoint, float]:
    """Atom built from the closed-form optimum, and the optimum value."""
    o = oracle_opt(inst)
    return atom_from_factor(factor_of(o.W_star, inst.r), inst.r), o.opt_value


def verify_lifting_hypothesis(
    inst: ProblemInstance, samples: int = 100, seed: int = 0, tol: float = 1e-8
) -> ConstraintReport:
    """Sample feasible triples and confirm the quadratic constraint is tight on each."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    f = assemble_qcqp(inst)
    rng = np.random.default_rng(seed)
    values = []
    for s in range(samples):
        # include the zero matrix and rank-deficient factors among the samples
        if s == 0:
            W = np.zeros((inst.d, inst.d))
        else:
            p = random_factor(inst, rng)
            if s % 4 == 0 and inst.r > 1:
                p = FactorPoint(p.U[:, :1] @ np.ones((1, inst.r)), p.V[:, :1] @ np.ones((1, inst.r)))
            W = lift_to_block(p).W
        t = projector_witness(W, inst.r)
        values.append(f.quadratic_constraint(triple_vector(t)))
    values = np.asarray(values)
    b = ReportBuilder()
    b.eq("max |z^T Qbar z + qbar^T z + hbar|", np.max(np.abs(values)), tol, note=f"{samples} samples")
    b.ge("min z^T Qbar z + qbar^T z + hbar", np.min(values), tol, note="never strictly negative")
    return b.build()
