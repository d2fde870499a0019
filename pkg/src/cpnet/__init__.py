"""Exact completely positive lifting of deep linear network training, with numerical checks."""

from .cp_lift import (
    FormulationData,
    LiftedPoint,
    assemble_qcqp,
    atom_from_triple,
    check_constraints_vectorized,
    check_constraints_kronecker,
    eval_objective_vectorized,
    kron_blocks,
    mix_atoms,
    verify_lifting_hypothesis,
)
from .linnet import (
    FactorPoint,
    LayerStack,
    OracleResult,
    ProblemInstance,
    collapse,
    deep_objective,
    expand_to_layers,
    oracle_opt,
    shallow_gradient,
    shallow_objective,
    train_shallow,
)
from .rank_sdp import (
    ComplementarityTriple,
    check_complementarity,
    factor_block,
    lift_to_block,
    projector_witness,
    rank_sdp_objective,
)
from .relax_solver import build_relaxation, certify_sandwich, solve
from .report import ConstraintReport

__version__ = "0.1.0"
