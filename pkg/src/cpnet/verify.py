"""End-to-end verification of the reformulation chain on one instance."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import cp_lift
from .cp_lift import (
    assemble_qcqp,
    atom_from_triple,
    check_constraints_vectorized,
    check_constraints_kronecker,
    eval_objective_vectorized,
    eval_objective_kronecker,
    factor_of,
    kron_blocks,
    random_factor,
    vectorized_residuals,
    kronecker_residuals,
    verify_lifting_hypothesis,
)
from .linnet import (
    ProblemInstance,
    TrainOptions,
    deep_objective,
    expand_to_layers,
    oracle_opt,
    shallow_objective,
    train_shallow,
)
from .rank_sdp import (
    ComplementarityTriple,
    check_complementarity,
    lift_to_block,
    projector_witness,
    rank_sdp_objective,
)
from .relax_solver import SolveOptions, build_relaxation, certify_sandwich, solve
from .report import ConstraintReport, ReportBuilder
from .tensor_core import min_eig, numerical_rank

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_NOT_CONVERGED = 3


@dataclass
class RunConfig:
    rank_tol: float = 1e-8
    constraint_tol: float = 1e-8
    objective_tol: float = 1e-9
    consistency_tol: float = 1e-10
    sandwich_tol: float = 1e-6
    samples: int = 100
    seed: int = 0
    train: TrainOptions = field(default_factory=TrainOptions)
    relax: SolveOptions = field(default_factory=SolveOptions)
    run_relaxation: bool = True
    # fault injection for exercising failure paths, e.g. {"wprime_scale": 0.9}
    tamper: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("rank_tol", "constraint_tol", "objective_tol", "consistency_tol", "sandwich_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.train.max_iter < 1 or self.relax.max_iter < 1:
            raise ValueError("iteration counts must be >= 1")
        unknown = set(self.tamper) - {"wprime_scale"}
        if unknown:
            raise ValueError(f"unknown tamper keys {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        if "train" in data:
            data["train"] = TrainOptions(**data["train"])
        if "relax" in data:
            data["relax"] = SolveOptions(**data["relax"])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class VerifyReport:
    sections: list[tuple[str, ConstraintReport]]
    info: dict
    converged: bool = True

    @property
    def passed(self) -> bool:
        return all(rep.passed for _, rep in self.sections)

    @property
    def exit_code(self) -> int:
        if not self.passed:
            return EXIT_VERIFY_FAILED
        if not self.converged:
            return EXIT_NOT_CONVERGED
        return EXIT_OK

    def failing_checks(self) -> list[str]:
        return [f"{name}: {row.name}" for name, rep in self.sections for row in rep.failures()]

    def section(self, name: str) -> ConstraintReport:
        for n, rep in self.sections:
            if n == name:
                return rep
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "exit_code": self.exit_code,
            "info": self.info,
            "sections": {name: rep.as_dict() for name, rep in self.sections},
            "failing": self.failing_checks(),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=1, sort_keys=True, default=_jsonable) + "\n"

    def to_text(self) -> str:
        lines = ["verification report"]
        for k in sorted(self.info):
            lines.append(f"  {k}: {self.info[k]}")
        for name, rep in self.sections:
            lines.append(rep.to_text(f"[{'PASS' if rep.passed else 'FAIL'}] {name}"))
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} (exit {self.exit_code})")
        for item in self.failing_checks():
            lines.append(f"  failing: {item}")
        return "\n".join(lines) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def objective_chain(p, inst: ProblemInstance, f=None) -> dict[str, float]:
    """Training objective of one factor point evaluated through every formulation."""
    f = f or assemble_qcqp(inst)
    atom = cp_lift.atom_from_factor(p, inst.r)
    return {
        "deep": deep_objective(expand_to_layers(p, inst.widths), inst),
        "shallow": shallow_objective(p, inst),
        "rank_sdp": rank_sdp_objective(lift_to_block(p).W, inst),
        "qcqp": f.objective(atom.z),
        "vectorized": eval_objective_vectorized(atom, inst),
        "kronecker": eval_objective_kronecker(kron_blocks(atom), inst),
    }


CHAIN_LINKS = (("deep", "shallow"), ("shallow", "rank_sdp"), ("rank_sdp", "qcqp"), ("qcqp", "vectorized"), ("vectorized", "kronecker"))


def random_passing_triple(d: int, r: int, rng: np.random.Generator) -> ComplementarityTriple:
    """A triple satisfying the complementarity system by construction.

    ``W'`` has ``k <= r`` unit eigenvalues and spreads ``r - k`` over the rest
    in ``[0, 1)`` (all ones when that is impossible). W lives in the unit
    eigenspace and is sometimes rank-deficient.
    """
    Qm, _ = np.linalg.qr(rng.standard_normal((d, d)))
    k = int(rng.integers(0, r + 1))
    lam = np.zeros(d)
    lam[:k] = 1.0
    rest = d - k
    if rest and r - k > 0:
        mean = (r - k) / rest
        if mean >= 1.0:
            lam[k:] = 1.0
        else:
            # pull a Dirichlet draw toward the flat spectrum until every entry is below 1
            x = rng.dirichlet(np.ones(rest)) * (r - k)
            t = 1.0 if x.max() < 1.0 else 0.9 * (1.0 - mean) / (x.max() - mean)
            lam[k:] = (1.0 - t) * mean + t * x
    Wp = (Qm * lam) @ Qm.T
    rank_w = int(rng.integers(0, k + 1))
    coef = rng.uniform(0.1, 3.0, rank_w)
    W = (Qm[:, :rank_w] * coef) @ Qm[:, :rank_w].T
    return ComplementarityTriple(0.5 * (W + W.T), 0.5 * (Wp + Wp.T), np.eye(d) - 0.5 * (Wp + Wp.T))


def run_verify(inst: ProblemInstance, cfg: RunConfig | None = None, deterministic: bool = True) -> VerifyReport:
    cfg = cfg or RunConfig()
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    sections: list[tuple[str, ConstraintReport]] = []
    f = assemble_qcqp(inst)
    oracle = oracle_opt(inst)
    opt = oracle.opt_value
    info: dict = {
        "widths": list(inst.widths),
        "n": inst.n,
        "d": inst.d,
        "r": inst.r,
        "rank_constraint_vacuous": inst.rank_vacuous,
        "opt_value": opt,
        "oracle_effective_rank": oracle.effective_rank,
    }

    b = ReportBuilder()
    b.ge("opt_value >= 0", opt, 0.0)
    b.le("effective_rank - r", oracle.effective_rank - inst.r, 0.0)
    sections.append(("oracle", b.build()))

    tr = train_shallow(inst, cfg.train)
    info["trained_objective"] = tr.objective
    info["trainer_converged"] = tr.converged
    sections.append(("trainer", ReportBuilder().ge(
        "trained objective - opt_value", tr.objective - opt, 1e-9).build()))

    worst = {f"{a} vs {c}": 0.0 for a, c in CHAIN_LINKS}
    forward_ok = 0
    for _ in range(cfg.samples):
        p = random_factor(inst, rng)
        vals = objective_chain(p, inst, f)
        for a, c in CHAIN_LINKS:
            key = f"{a} vs {c}"
            worst[key] = max(worst[key], abs(vals[a] - vals[c]))
        t = projector_witness(lift_to_block(p).W, inst.r, cfg.rank_tol)
        forward_ok += check_complementarity(t, inst.r, cfg.constraint_tol).passed
    b = ReportBuilder()
    for key, v in worst.items():
        b.eq(f"max |{key}|", v, cfg.objective_tol)
    sections.append(("objective-chain", b.build()))

    b = ReportBuilder()
    b.eq("forward witnesses failing", cfg.samples - forward_ok, 0.0)
    conv_bad = 0
    for _ in range(cfg.samples):
        t = random_passing_triple(inst.d, inst.r, rng)
        if check_complementarity(t, inst.r, 1e-10).passed:
            conv_bad += numerical_rank(t.W, cfg.rank_tol) > inst.r
    b.eq("converse: passing triples with rank(W) > r", conv_bad, 0.0)
    sections.append(("complementarity", b.build()))

    triple = projector_witness(lift_to_block(factor_of(oracle.W_star, inst.r)).W, inst.r, cfg.rank_tol)
    if "wprime_scale" in cfg.tamper:
        s = float(cfg.tamper["wprime_scale"])
        triple = ComplementarityTriple(triple.W, s * triple.W_prime, triple.S)
        info["tampered"] = dict(cfg.tamper)
    atom = atom_from_triple(triple)
    sections.append(("optimal-atom constraints (vectorized)", check_constraints_vectorized(atom, inst, cfg.constraint_tol)))
    atom_obj = eval_objective_vectorized(atom, inst)
    info["atom_objective"] = atom_obj
    sections.append(("optimal-atom value", ReportBuilder().eq(
        "atom objective - opt_value", atom_obj - opt, cfg.constraint_tol).build()))
    sections.append(("optimal-atom constraints (Kronecker)", check_constraints_kronecker(atom, inst, cfg.constraint_tol)))
    r1 = vectorized_residuals(atom, inst.r)
    r2 = kronecker_residuals(kron_blocks(atom), inst.r)
    b = ReportBuilder()
    for key in r1:
        b.eq(f"family ({key}) vectorized vs Kronecker", np.max(np.abs(r1[key] - r2[key])), cfg.consistency_tol)
    sections.append(("vectorized/Kronecker agreement", b.build()))

    sections.append(("lifting hypothesis", verify_lifting_hypothesis(
        inst, cfg.samples, cfg.seed, cfg.constraint_tol)))
    sections.append(("Q psd", ReportBuilder().ge("min eig Q", min_eig(f.Q, "lapack"), 1e-10).build()))

    converged = True
    if cfg.run_relaxation:
        res = solve(build_relaxation(f, inst), cfg.relax)
        sw = certify_sandwich(inst, res, cfg.sandwich_tol, raise_on_violation=False)
        converged = res.converged
        info["relaxation"] = res.as_dict()
        info["relaxation_gap"] = sw.gap
        if not deterministic:
            info["relaxation"]["elapsed_s"] = res.elapsed
        if converged:
            sections.append(("relaxation sandwich", sw.report))
        else:
            # an unconverged iterate certifies nothing; report it and exit 3
            info["relaxation_sandwich_uncertified"] = sw.report.as_dict()
    if not deterministic:
        info["elapsed_s"] = time.perf_counter() - t0
    return VerifyReport(sections, info, converged)
