import numpy as np
import pytest

from cpnet.errors import NotPSDError, RankError, ShapeError
from cpnet.linnet import FactorPoint, shallow_objective
from cpnet.cp_lift import random_factor
from cpnet.rank_sdp import (
    ComplementarityTriple,
    check_complementarity,
    factor_block,
    lift_to_block,
    projector_witness,
    rank_sdp_objective,
)
from cpnet.tensor_core import numerical_rank
from cpnet.verify import random_passing_triple


class TestLift:
    def test_blocks(self, rng):
        U = rng.standard_normal((2, 1))
        V = rng.standard_normal((3, 1))
        L = lift_to_block(FactorPoint(U, V))
        np.testing.assert_allclose(L.A, U @ U.T, atol=1e-14)
        np.testing.assert_allclose(L.B, V @ V.T, atol=1e-14)
        np.testing.assert_allclose(L.M, U @ V.T, atol=1e-14)
        assert numerical_rank(L.W) == 1

    def test_objective_matches_shallow(self, instance, rng):
        p = random_factor(instance, rng)
        assert abs(rank_sdp_objective(lift_to_block(p).W, instance) - shallow_objective(p, instance)) <= 1e-12

    def test_objective_shape_check(self, small_instance):
        with pytest.raises(ShapeError):
            rank_sdp_objective(np.eye(3), small_instance)


class TestFactorBlock:
    def test_round_trip(self, rng):
        p = FactorPoint(rng.standard_normal((2, 2)), rng.standard_normal((3, 2)))
        W = lift_to_block(p).W
        q = factor_block(W, 2, 2)
        np.testing.assert_allclose(lift_to_block(q).W, W, atol=1e-10)
        np.testing.assert_allclose(q.product, p.product, atol=1e-10)

    def test_not_psd(self):
        with pytest.raises(NotPSDError):
            factor_block(np.diag([1.0, -1.0, 0.0]), 2, 1)

    def test_rank_too_high(self):
        with pytest.raises(RankError):
            factor_block(np.eye(3), 2, 1)

    def test_bad_split(self):
        with pytest.raises(ShapeError):
            factor_block(np.eye(3), 3, 3)


class TestWitness:
    def test_rank_one(self):
        W = np.diag([2.0, 0.0, 0.0])
        t = projector_witness(W, 1)
        np.testing.assert_allclose(t.W_prime, np.diag([1.0, 0.0, 0.0]), atol=1e-14)
        assert check_complementarity(t, 1).passed

    def test_rank_deficient_padding(self):
        t = projector_witness(np.zeros((4, 4)), 2)
        assert np.trace(t.W_prime) == pytest.approx(2.0, abs=1e-12)
        assert check_complementarity(t, 2).passed

    def test_rejects_high_rank(self):
        with pytest.raises(RankError):
            projector_witness(np.eye(3), 2)

    def test_forward_direction(self, instance, rng):
        for _ in range(10):
            t = projector_witness(lift_to_block(random_factor(instance, rng)).W, instance.r)
            rep = check_complementarity(t, instance.r)
            assert rep.passed, rep.to_text()

    def test_scaled_identity_fails(self):
        # W' = (r/d) I has the right trace and bounds but <W, S> > 0
        d, r = 4, 1
        W = np.diag([1.0, 0.0, 0.0, 0.0])
        Wp = (r / d) * np.eye(d)
        rep = check_complementarity(ComplementarityTriple(W, Wp, np.eye(d) - Wp), r)
        assert not rep.passed
        assert [row.name for row in rep.failures()] == ["<W, S>"]
        assert rep["<W, S>"].residual == pytest.approx(0.75, abs=1e-15)

    def test_converse(self, rng):
        for _ in range(50):
            d = int(rng.integers(2, 7))
            r = int(rng.integers(1, d + 1))
            t = random_passing_triple(d, r, rng)
            if check_complementarity(t, r, 1e-10).passed:
                assert numerical_rank(t.W) <= r

    def test_triple_shapes(self):
        with pytest.raises(ShapeError):
            ComplementarityTriple(np.eye(2), np.eye(3), np.eye(2))
