import numpy as np
import pytest

from cpnet.cp_lift import assemble_qcqp, atom_from_factor, mix_atoms, optimal_atom, random_factor
from cpnet.errors import SandwichViolation
from cpnet.linnet import ProblemInstance, oracle_opt
from cpnet.relax_solver import (
    RelaxationResult,
    SolveOptions,
    build_relaxation,
    certify_sandwich,
    embed_point,
    feasibility_residual,
    solve,
)

from .conftest import make_instance


def relax(inst, **kw):
    return build_relaxation(assemble_qcqp(inst), inst), SolveOptions(**kw)


class TestBuild:
    def test_family_counts_d2(self):
        inst = ProblemInstance(np.ones((1, 2)), np.ones((1, 2)), (1, 1))
        prob = build_relaxation(assemble_qcqp(inst))
        assert prob.d == 2
        assert prob.family_counts() == {"normalize": 1, "i": 1, "ii": 1, "iii": 4, "iv": 4, "v": 1, "link": 12}
        assert prob.block_sizes == (13, 2, 2, 2, 1)

    def test_eq3_count(self, instance):
        prob = build_relaxation(assemble_qcqp(instance))
        d = instance.d
        assert prob.eq3_count == 1 + 1 + d * d + d * d + 1

    def test_atoms_feasible(self, instance, rng):
        prob = build_relaxation(assemble_qcqp(instance))
        a = atom_from_factor(random_factor(instance, rng), instance.r)
        b = atom_from_factor(random_factor(instance, rng), instance.r)
        for pt in (a, mix_atoms([a, b], [0.3, 0.7])):
            aff, cone = feasibility_residual(prob, embed_point(prob, pt))
            assert aff <= 1e-9
            assert cone >= -1e-9

    def test_objective_at_atom(self, instance, rng):
        f = assemble_qcqp(instance)
        prob = build_relaxation(f)
        a = atom_from_factor(random_factor(instance, rng), instance.r)
        x = embed_point(prob, a)
        assert prob.objective_vector() @ x == pytest.approx(f.objective(a.z), abs=1e-9)

    def test_split_join(self, small_instance, rng):
        prob = build_relaxation(assemble_qcqp(small_instance))
        x = rng.standard_normal(prob.nvar)
        assert np.array_equal(prob.join(prob.split(x)), x)


class TestSolve:
    def test_sandwich_small(self):
        inst = make_instance(1)
        prob, opts = relax(inst)
        res = solve(prob, opts)
        assert res.converged
        assert res.primal_residual <= 1e-7 and res.dual_residual <= 1e-7
        sw = certify_sandwich(inst, res)
        assert sw.passed
        assert res.lower_bound <= oracle_opt(inst).opt_value + 1e-6

    def test_zero_target(self):
        inst = ProblemInstance(np.array([[1.0, -1.0, 2.0]]), np.zeros((1, 3)), (1, 1))
        prob, opts = relax(inst)
        res = solve(prob, opts)
        assert res.converged
        assert abs(res.lower_bound) <= 1e-6

    def test_deterministic(self):
        inst = make_instance(0)
        prob, opts = relax(inst, max_iter=300)
        a, b = solve(prob, opts), solve(prob, opts)
        assert a.lower_bound == b.lower_bound
        assert a.iterations == b.iterations
        assert np.array_equal(a.bordered, b.bordered)

    def test_residual_trend(self):
        prob, opts = relax(make_instance(1), record_every=10, max_iter=2000)
        res = solve(prob, opts)
        pr = np.array([t[1] for t in res.trace])
        assert pr.size >= 4
        q = pr.size // 4
        assert np.median(pr[-q:]) < np.median(pr[:q])

    def test_cap_reports_not_converged(self):
        prob, opts = relax(make_instance(3), max_iter=5)
        res = solve(prob, opts)
        assert not res.converged and res.iterations == 5

    def test_violation_raises(self):
        inst = make_instance(1)
        opt = oracle_opt(inst).opt_value
        fake = RelaxationResult(opt + 1.0, opt + 1.0, 0.0, np.zeros((1, 1)), 0.0, 0.0, 1, True, 1.0)
        with pytest.raises(SandwichViolation):
            certify_sandwich(inst, fake)
        sw = certify_sandwich(inst, fake, raise_on_violation=False)
        assert not sw.passed
