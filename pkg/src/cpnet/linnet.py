"""Deep linear network training problem, its shallow form, and a global oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ShapeError
from .tensor_core import as_matrix

PINV_CUTOFF = 1e-10


@dataclass(frozen=True)
class ProblemInstance:
    """Training data ``X`` (d_0 x n), targets ``Y`` (d_N x n) and layer widths."""

    X: np.ndarray
    Y: np.ndarray
    widths: tuple[int, ...]

    def __post_init__(self):
        X = as_matrix(self.X, "X")
        Y = as_matrix(self.Y, "Y")
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2:
            raise ShapeError("need at least two widths (N >= 1)")
        if min(widths) < 1:
            raise ShapeError("all widths must be >= 1")
        if X.shape[0] != widths[0]:
            raise ShapeError(f"X has {X.shape[0]} rows, widths[0] = {widths[0]}")
        if Y.shape[0] != widths[-1]:
            raise ShapeError(f"Y has {Y.shape[0]} rows, widths[-1] = {widths[-1]}")
        if X.shape[1] != Y.shape[1] or X.shape[1] < 1:
            raise ShapeError(f"X and Y need the same n >= 1, got {X.shape[1]} and {Y.shape[1]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "widths", widths)

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def d_0(self) -> int:
        return self.widths[0]

    @property
    def d_N(self) -> int:
        return self.widths[-1]

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def d(self) -> int:
        return self.d_N + self.d_0

    @property
    def r(self) -> int:
        return min(self.widths)

    @property
    def rank_vacuous(self) -> bool:
        """True when the bottleneck is the input or output layer itself."""
        return self.r >= min(self.d_0, self.d_N)

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return (
            self.widths == other.widths
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.Y, other.Y)
        )

    __hash__ = None


@dataclass(frozen=True)
class LayerStack:
    layers: tuple[np.ndarray, ...]

    def __post_init__(self):
        layers = tuple(as_matrix(w, f"W_{k + 1}") for k, w in enumerate(self.layers))
        if not layers:
            raise ShapeError("empty layer stack")
        for k in range(1, len(layers)):
            if layers[k].shape[1] != layers[k - 1].shape[0]:
                raise ShapeError(
                    f"W_{k + 1} has {layers[k].shape[1]} columns, W_{k} has {layers[k - 1].shape[0]} rows"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.layers[0].shape[1],) + tuple(w.shape[0] for w in self.layers)


@dataclass(frozen=True)
class FactorPoint:
    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = as_matrix(self.U, "U")
        V = as_matrix(self.V, "V")
        if U.shape[1] != V.shape[1]:
            raise ShapeError(f"U and V need equal column counts, got {U.shape[1]} and {V.shape[1]}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @property
    def product(self) -> np.ndarray:
        return self.U @ self.V.T


@dataclass(frozen=True)
class OracleResult:
    W_star: np.ndarray
    opt_value: float
    effective_rank: int


def _loss(M: np.ndarray, inst: ProblemInstance) -> float:
    R = M @ inst.X - inst.Y
    return float(np.sum(R * R) / (2 * inst.n))


def collapse(stack: LayerStack) -> np.ndarray:
    out = stack.layers[0]
    for w in stack.layers[1:]:
        out = w @ out
    return out


def deep_objective(stack: LayerStack, inst: ProblemInstance) -> float:
    if stack.widths[0] != inst.d_0 or stack.widths[-1] != inst.d_N:
        raise ShapeError(f"stack maps {stack.widths[0]} -> {stack.widths[-1]}, instance needs {inst.d_0} -> {inst.d_N}")
    return _loss(collapse(stack), inst)


def _check_factor(p: FactorPoint, inst: ProblemInstance):
    if p.U.shape[0] != inst.d_N or p.V.shape[0] != inst.d_0:
        raise ShapeError(f"factor shapes {p.U.shape}, {p.V.shape} do not match d_N={inst.d_N}, d_0={inst.d_0}")


def shallow_objective(p: FactorPoint, inst: ProblemInstance) -> float:
    _check_factor(p, inst)
    return _loss(p.product, inst)


def expand_to_layers(p: FactorPoint, widths) -> LayerStack:
    """Deep parameters whose product is ``U V^T``.

    Layer 1 writes ``V^T x`` into the first r coordinates, middle layers copy
    those coordinates through, and layer N reads them out with ``U``.
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2:
        raise ShapeError("need at least two widths")
    r = min(widths)
    if p.U.shape != (widths[-1], r) or p.V.shape != (widths[0], r):
        raise ShapeError(
            f"factor shapes {p.U.shape}, {p.V.shape} incompatible with widths {widths} (r={r})"
        )
    N = len(widths) - 1
    if N == 1:
        return LayerStack((p.product,))
    layers = []
    for k in range(1, N + 1):
        rows, cols = widths[k], widths[k - 1]
        if k == 1:
            W = np.zeros((rows, cols))
            W[:r, :] = p.V.T
        elif k == N:
            W = p.U @ np.eye(r, cols)
        else:
            W = np.zeros((rows, cols))
            W[:r, :r] = np.eye(r)
        layers.append(W)
    return LayerStack(tuple(layers))


def shallow_gradient(p: FactorPoint, inst: ProblemInstance) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the shallow loss: ``dU = R X^T V / n`` and ``dV = X R^T U / n``."""
    _check_factor(p, inst)
    R = p.product @ inst.X - inst.Y
    dU = R @ inst.X.T @ p.V / inst.n
    dV = inst.X @ R.T @ p.U / inst.n
    return dU, dV


@dataclass
class TrainOptions:
    max_iter: int = 20000
    step: float = 0.1
    line_search: bool = True
    tol: float = 1e-10
    seed: int = 0
    init_scale: float = 0.1


@dataclass
class TrainResult:
    point: FactorPoint
    objective: float
    grad_norm: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


def train_shallow(inst: ProblemInstance, opts: TrainOptions | None = None) -> TrainResult:
    """Gradient descent on the shallow factorization from a balanced random start."""
    opts = opts or TrainOptions()
    rng = np.random.default_rng(opts.seed)
    r = inst.r
    U = rng.standard_normal((inst.d_N, r))
    V = rng.standard_normal((inst.d_0, r))
    # balanced start: ||U||_F == ||V||_F
    nu, nv = np.linalg.norm(U), np.linalg.norm(V)
    U *= opts.init_scale / nu
    V *= opts.init_scale / nv
    p = FactorPoint(U, V)
    f = shallow_objective(p, inst)
    f0 = max(f, 1e-300)
    step = opts.step
    history = [f]
    gnorm = np.inf
    for it in range(1, opts.max_iter + 1):
        dU, dV = shallow_gradient(p, inst)
        g2 = float(np.sum(dU * dU) + np.sum(dV * dV))
        gnorm = np.sqrt(g2)
        if gnorm <= opts.tol:
            return TrainResult(p, f, gnorm, it - 1, True, history)
        if opts.line_search:
            t = step * 2.0
            while True:
                cand = FactorPoint(p.U - t * dU, p.V - t * dV)
                fc = shallow_objective(cand, inst)
                if fc <= f - 0.5 * t * g2 or t < 1e-16:
                    break
                t *= 0.5
            step = t
        else:
            cand = FactorPoint(p.U - step * dU, p.V - step * dV)
            fc = shallow_objective(cand, inst)
        if not np.isfinite(fc) or fc > 1e6 * f0:
            raise DivergenceError(f"objective {fc:g} exceeded 1e6 x initial {f0:g} at iteration {it}")
        p, f = cand, fc
        history.append(f)
    dU, dV = shallow_gradient(p, inst)
    gnorm = float(np.sqrt(np.sum(dU * dU) + np.sum(dV * dV)))
    return TrainResult(p, f, gnorm, opts.max_iter, gnorm <= opts.tol, history)


def _pinv_rows(X: np.ndarray):
    """Thin SVD of X keeping singular values above ``PINV_CUTOFF * s_max``."""
    u, s, vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return u[:, :0], s[:0], vt[:0]
    keep = s > PINV_CUTOFF * s[0]
    return u[:, keep], s[keep], vt[keep]


def oracle_opt(inst: ProblemInstance) -> OracleResult:
    """Global optimum of the rank-r regression by reduced-rank regression.

    Least squares gives fitted values ``Yhat = Y P`` with P the projector onto
    the row space of X; the best rank-r fit is the truncated SVD of Yhat and
    ``W* = Yhat_r X^+``.
    """
    X, Y, r = inst.X, inst.Y, inst.r
    ux, sx, vxt = _pinv_rows(X)
    Yhat = (Y @ vxt.T) @ vxt
    uy, sy, vyt = np.linalg.svd(Yhat, full_matrices=False)
    k = min(r, sy.size)
    Yhat_r = (uy[:, :k] * sy[:k]) @ vyt[:k]
    X_pinv = (vxt.T / sx) @ ux.T
    W_star = Yhat_r @ X_pinv
    opt = _loss(W_star, inst)
    s_w = np.linalg.svd(W_star, compute_uv=False)
    eff = int(np.sum(s_w > 1e-10 * max(1.0, s_w[0] if s_w.size else 0.0)))
    return OracleResult(W_star, opt, eff)


def alternating_minimization(
    inst: ProblemInstance, seed: int, max_iter: int = 5000, tol: float = 1e-15
) -> FactorPoint:
    """Block least squares over (U, V) from a random start; an independent check on the oracle."""
    rng = np.random.default_rng(seed)
    r = inst.r
    X, Y = inst.X, inst.Y
    U = rng.standard_normal((inst.d_N, r))
    V = rng.standard_normal((inst.d_0, r))
    prev = np.inf
    for _ in range(max_iter):
        # U-step: min ||U (V^T X) - Y||
        G = V.T @ X
        U = np.linalg.lstsq(G.T, Y.T, rcond=None)[0].T
        # V-step: vec(U V^T X) = (X^T kron U) vec(V^T)
        K = np.kron(X.T, U)
        vt = np.linalg.lstsq(K, Y.reshape(-1, order="F"), rcond=None)[0]
        V = vt.reshape(r, inst.d_0, order="F").T
        f = _loss(U @ V.T, inst)
        if prev - f <= tol * max(1.0, f):
            break
        prev = f
    return FactorPoint(U, V)
