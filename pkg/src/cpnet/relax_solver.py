"""PSD outer relaxation of the lifted program and an ADMM solver for it.

The completely positive cone is replaced by necessary conditions: the bordered
moment matrix is PSD and each reshaped first-order block ``mat(z_k)`` is PSD.
The variable is block diagonal over

    block 0: bordered matrix, size 1 + 3 d^2
    blocks 1..3: copies of mat(z_1), mat(z_2), mat(z_3), size d
    block 4: 1 x 1 nonnegative slack of the complementarity inequality

and every constraint reads ``<F_i, X> = c_i`` with symmetric ``F_i``. This is
the SDPA dual standard form, which is what :mod:`cpnet.formats` exports.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cp_lift import FormulationData, LiftedPoint, optimal_atom
from .errors import ConvergenceError, SandwichViolation
from .linnet import ProblemInstance, oracle_opt
from .report import ConstraintReport, ReportBuilder
from .tensor_core import psd_project, vec

log = logging.getLogger(__name__)

# family tags for constraint rows
NORMALIZE = "normalize"
LINK = "link"
EQ3_FAMILIES = ("i", "ii", "iii", "iv", "v")


@dataclass(frozen=True)
class Constraint:
    """``sum over (block, i, j, v) of v * (X_b[i, j] + X_b[j, i] if i != j else X_b[i, i]) = rhs``."""

    name: str
    family: str
    entries: tuple[tuple[int, int, int, float], ...]
    rhs: float
    sense: str = "eq"  # "le" marks a row that came from an inequality via the slack block


@dataclass(frozen=True)
class RelaxationProblem:
    block_sizes: tuple[int, ...]
    block_kinds: tuple[str, ...]  # "psd" or "nonneg"
    objective: tuple[tuple[int, int, int, float], ...]  # upper-triangular entries of C
    constraints: tuple[Constraint, ...]
    d: int
    r: int

    def family_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for c in self.constraints:
            out[c.family] = out.get(c.family, 0) + 1
        return out

    @property
    def eq3_count(self) -> int:
        return sum(1 for c in self.constraints if c.family in EQ3_FAMILIES)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([n * n for n in self.block_sizes])])

    @property
    def nvar(self) -> int:
        return int(self.offsets[-1])

    def _flat(self, entries) -> np.ndarray:
        out = np.zeros(self.nvar)
        off, sizes = self.offsets, self.block_sizes
        for b, i, j, v in entries:
            n = sizes[b]
            out[off[b] + i * n + j] += v
            if i != j:
                out[off[b] + j * n + i] += v
        return out

    def objective_vector(self) -> np.ndarray:
        return self._flat(self.objective)

    def constraint_matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        rows, cols, vals = [], [], []
        off, sizes = self.offsets, self.block_sizes
        for k, c in enumerate(self.constraints):
            for b, i, j, v in c.entries:
                n = sizes[b]
                rows.append(k)
                cols.append(off[b] + i * n + j)
                vals.append(v)
                if i != j:
                    rows.append(k)
                    cols.append(off[b] + j * n + i)
                    vals.append(v)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.constraints), self.nvar))
        A.sum_duplicates()
        b = np.array([c.rhs for c in self.constraints])
        return A, b

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        off = self.offsets
        return [x[off[k] : off[k + 1]].reshape(n, n) for k, n in enumerate(self.block_sizes)]

    def join(self, blocks) -> np.ndarray:
        return np.concatenate([np.asarray(b, dtype=float).reshape(-1) for b in blocks])


def _upper(M: np.ndarray, block: int, tol: float = 0.0):
    """Nonzero upper-triangular entries of a symmetric matrix as (block, i, j, v)."""
    out = []
    n = M.shape[0]
    for i in range(n):
        for j in range(i, n):
            v = float(M[i, j])
            if abs(v) > tol:
                out.append((block, i, j, v))
    return out


def build_relaxation(f: FormulationData, inst: ProblemInstance | None = None) -> RelaxationProblem:
    d, r = f.d, f.r
    m = d * d
    N = 1 + 3 * m
    zpos = lambda k, idx: 1 + (k - 1) * m + idx  # bordered index of z_k[idx]
    vec_eye = vec(np.eye(d))

    C = np.zeros((N, N))
    C[0, 0] = f.h
    C[0, 1:] = C[1:, 0] = 0.5 * f.q
    C[1:, 1:] = f.Q
    objective = tuple(_upper(C, 0))

    cons: list[Constraint] = [Constraint("X[0,0] = 1", NORMALIZE, ((0, 0, 0, 1.0),), 1.0)]
    cons.append(Constraint(
        "(i) tr mat(z2) = r", "i",
        tuple((0, 0, zpos(2, k), 0.5 * vec_eye[k]) for k in range(m) if vec_eye[k]),
        float(r),
    ))
    diag_idx = [k for k in range(m) if vec_eye[k]]
    cons.append(Constraint(
        "(ii) <vec(I)vec(I)^T, Z22> = r^2", "ii",
        tuple((0, zpos(2, a), zpos(2, b), 1.0) for a in diag_idx for b in diag_idx if a <= b),
        float(r * r),
    ))
    for k in range(m):
        cons.append(Constraint(
            f"(iii) z2+z3 = vec(I) [{k}]", "iii",
            ((0, 0, zpos(2, k), 0.5), (0, 0, zpos(3, k), 0.5)),
            float(vec_eye[k]),
        ))
    for k in range(m):
        a, c = zpos(2, k), zpos(3, k)
        cons.append(Constraint(
            f"(iv) diag(Z22+Z23+Z32+Z33) = vec(I) [{k}]", "iv",
            ((0, a, a, 1.0), (0, a, c, 1.0), (0, c, c, 1.0)),
            float(vec_eye[k]),
        ))
    ent = [(0, 0, zpos(1, k), 0.5) for k in diag_idx]
    ent += [(0, zpos(1, k), zpos(2, k), -0.5) for k in range(m)]
    ent.append((4, 0, 0, 1.0))
    cons.append(Constraint("(v) tr mat(z1) - tr Z12 + slack = 0", "v", tuple(ent), 0.0, sense="le"))
    for blk in (1, 2, 3):
        for i in range(d):
            for j in range(i, d):
                for idx in sorted({i + j * d, j + i * d}):
                    v = 1.0 if i == j else 0.5
                    cons.append(Constraint(
                        f"link mat(z{blk})[{i},{j}] = z{blk}[{idx}]", LINK,
                        ((blk, i, j, v), (0, 0, zpos(blk, idx), -0.5)),
                        0.0,
                    ))
    return RelaxationProblem(
        block_sizes=(N, d, d, d, 1),
        block_kinds=("psd", "psd", "psd", "psd", "nonneg"),
        objective=objective,
        constraints=tuple(cons),
        d=d,
        r=r,
    )


def embed_point(prob: RelaxationProblem, pt: LiftedPoint) -> np.ndarray:
    """Place a lifted point into the relaxation's block variable (slack set to make (v) tight)."""
    d = prob.d
    zs = [pt.part(k).reshape(d, d, order="F") for k in (1, 2, 3)]
    slack = -(np.trace(zs[0]) - np.trace(pt.block(1, 2)))
    return prob.join([pt.bordered()] + [0.5 * (z + z.T) for z in zs] + [np.array([[slack]])])


def feasibility_residual(prob: RelaxationProblem, x: np.ndarray) -> tuple[float, float]:
    """(max affine residual, most negative cone eigenvalue) of a block variable."""
    A, b = prob.constraint_matrix()
    aff = float(np.max(np.abs(A @ x - b)))
    worst = 0.0
    for blk, kind in zip(prob.split(x), prob.block_kinds):
        if kind == "psd":
            worst = min(worst, float(np.linalg.eigvalsh(0.5 * (blk + blk.T))[0]))
        else:
            worst = min(worst, float(np.min(blk)))
    return aff, worst


@dataclass
class SolveOptions:
    rho: float = 1.0
    max_iter: int = 20000
    tol_p: float = 1e-7
    tol_d: float = 1e-7
    seed: int = 0
    balance_every: int = 20
    balance_ratio: float = 10.0
    balance_factor: float = 2.0
    record_every: int = 0  # 0 disables the residual trace


@dataclass
class RelaxationResult:
    lower_bound: float
    objective: float
    safety_margin: float
    bordered: np.ndarray
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    rho: float
    elapsed: float = 0.0
    trace: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "lower_bound": self.lower_bound,
            "objective": self.objective,
            "safety_margin": self.safety_margin,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "rho": self.rho,
        }


class _AffineProjector:
    """Euclidean projection onto ``{x : A x = b}``.

    ``A A^T`` is singular here (the off-diagonal rows of family (iii) follow
    from the link rows), so the cached factor is an eigen-pseudo-inverse.
    """

    def __init__(self, A: sp.csr_matrix, b: np.ndarray):
        self.A = A
        self.At = A.T.tocsr()
        self.b = b
        G = (A @ self.At).toarray()
        w, V = np.linalg.eigh(0.5 * (G + G.T))
        keep = w > 1e-12 * max(1.0, float(w[-1]))
        self.rank = int(keep.sum())
        self._V = V[:, keep]
        self._winv = 1.0 / w[keep]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        res = self.A @ x - self.b
        lam = self._V @ (self._winv * (self._V.T @ res))
        return x - self.At @ lam


def _project_cone(prob: RelaxationProblem, x: np.ndarray) -> np.ndarray:
    out = []
    for blk, kind in zip(prob.split(x), prob.block_kinds):
        if kind == "psd":
            out.append(psd_project(0.5 * (blk + blk.T), method="lapack"))
        else:
            out.append(np.maximum(blk, 0.0))
    return prob.join(out)


def solve(prob: RelaxationProblem, opts: SolveOptions | None = None) -> RelaxationResult:
    """ADMM on ``min <C, x>`` over ``{A x = b}`` intersected with the cone.

    Iterates ``x = P_aff(y - u - C/rho)``, ``y = P_cone(x + u)``, ``u += x - y``.
    Residuals are scaled: primal ``||x - y|| / (1 + max(||x||, ||y||))`` and
    dual ``rho ||y - y_prev|| / (1 + rho ||u||)``. ``rho`` is rebalanced every
    ``balance_every`` iterations when one residual exceeds the other by
    ``balance_ratio``. The reported bound is ``<C, x>`` at the affine-feasible
    iterate lowered by the margin ``max(0, <C, x - y>)``, i.e. the smaller of
    the objectives at the affine and the cone iterate.
    """
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    A, b = prob.constraint_matrix()
    c = prob.objective_vector()
    proj = _AffineProjector(A, b)
    rng = np.random.default_rng(opts.seed)
    rho = float(opts.rho)
    y = _project_cone(prob, proj(1e-3 * rng.standard_normal(prob.nvar)))
    u = np.zeros_like(y)
    x = y
    pr = dr = np.inf
    trace = []
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        x = proj(y - u - c / rho)
        y_prev = y
        y = _project_cone(prob, x + u)
        u = u + x - y
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        pr = np.linalg.norm(x - y) / (1.0 + max(nx, ny))
        dr = rho * np.linalg.norm(y - y_prev) / (1.0 + rho * np.linalg.norm(u))
        if not (np.isfinite(pr) and np.isfinite(dr)):
            raise ConvergenceError(f"ADMM residuals became non-finite at iteration {it}")
        if opts.record_every and it % opts.record_every == 0:
            trace.append((it, float(pr), float(dr)))
        if pr <= opts.tol_p and dr <= opts.tol_d:
            converged = True
            break
        if opts.balance_every and it % opts.balance_every == 0:
            if pr > opts.balance_ratio * dr:
                rho *= opts.balance_factor
                u /= opts.balance_factor
            elif dr > opts.balance_ratio * pr:
                rho /= opts.balance_factor
                u *= opts.balance_factor
    obj = float(c @ x)
    margin = max(0.0, obj - float(c @ y))
    bordered = prob.split(y)[0]
    if not converged:
        log.warning("ADMM hit the iteration cap (%d): primal %.2e, dual %.2e", opts.max_iter, pr, dr)
    return RelaxationResult(
        lower_bound=obj - margin,
        objective=obj,
        safety_margin=margin,
        bordered=bordered,
        primal_residual=float(pr),
        dual_residual=float(dr),
        iterations=it,
        converged=converged,
        rho=rho,
        elapsed=time.perf_counter() - t0,
        trace=trace,
    )


@dataclass(frozen=True)
class SandwichReport:
    opt_value: float
    lower_bound: float
    atom_objective: float
    gap: float
    report: ConstraintReport

    @property
    def passed(self) -> bool:
        return self.report.passed


def certify_sandwich(
    inst: ProblemInstance, result: RelaxationResult, tol: float = 1e-6, raise_on_violation: bool = True
) -> SandwichReport:
    """Check ``lower_bound <= opt + tol`` and that the optimal atom attains ``opt``."""
    from .cp_lift import eval_objective_vectorized

    opt = oracle_opt(inst).opt_value
    atom, _ = optimal_atom(inst)
    atom_obj = eval_objective_vectorized(atom, inst)
    b = ReportBuilder()
    b.le("lower_bound - opt_value", result.lower_bound - opt, tol)
    b.eq("atom objective - opt_value", atom_obj - opt, tol)
    rep = b.build()
    if raise_on_violation and not rep["lower_bound - opt_value"].passed:
        raise SandwichViolation(
            f"relaxation bound {result.lower_bound:.12g} exceeds optimum {opt:.12g} by more than {tol:g}"
        )
    return SandwichReport(opt, result.lower_bound, atom_obj, opt - result.lower_bound, rep)
