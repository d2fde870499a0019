import pathlib

import numpy as np
import pytest

from cpnet.formats import generate_instance
from cpnet.linnet import ProblemInstance

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

# desk-scale shapes: d_0, d_N <= 4, N <= 4, n <= 8
SHAPES = [
    ((1, 1), 2),
    ((2, 1, 2), 4),
    ((2, 1, 3), 5),
    ((3, 2, 3), 6),
    ((3, 2, 2, 4), 7),
    ((4, 3, 2, 3, 4), 8),
    ((2, 2), 3),
    ((4, 1, 4), 8),
    ((3, 4, 1, 2), 5),
    ((1, 3, 2), 4),
]


def make_instance(k: int, kind: str = "random-gaussian", seed: int | None = None) -> ProblemInstance:
    widths, n = SHAPES[k % len(SHAPES)]
    return generate_instance({"kind": kind, "widths": list(widths), "n": n}, k if seed is None else seed)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(params=range(len(SHAPES)), ids=lambda k: "x".join(map(str, SHAPES[k][0])))
def instance(request):
    return make_instance(request.param)


@pytest.fixture
def small_instance():
    return make_instance(1)
