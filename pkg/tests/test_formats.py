import json

import numpy as np
import pytest

from cpnet.cp_lift import assemble_qcqp
from cpnet.errors import InstanceFormatError, UnknownSchemaError
from cpnet.formats import (
    export_sdpa,
    format_sdpa,
    generate_instance,
    instance_to_dict,
    parse_instance,
    parse_sdpa,
    sdpa_from_relaxation,
    sdpa_max_difference,
    serialize_instance,
)
from cpnet.linnet import ProblemInstance, oracle_opt
from cpnet.relax_solver import build_relaxation

from .conftest import make_instance


class TestInstanceJSON:
    def test_round_trip(self, instance):
        assert parse_instance(serialize_instance(instance)) == instance

    def test_round_trip_file(self, tmp_path, small_instance):
        p = tmp_path / "inst.json"
        p.write_text(serialize_instance(small_instance, {"kind": "random-gaussian"}))
        back = parse_instance(p)
        assert np.array_equal(back.X, small_instance.X) and np.array_equal(back.Y, small_instance.Y)

    def test_shape_error_names_field(self):
        data = instance_to_dict(make_instance(1))
        data["X"] = [[1.0] * 4] * 3
        with pytest.raises(InstanceFormatError, match=r"X: expected 2 rows \(widths\[0\]\), got 3"):
            parse_instance(json.dumps(data))

    def test_unknown_version(self):
        data = instance_to_dict(make_instance(1))
        data["version"] = 99
        with pytest.raises(UnknownSchemaError):
            parse_instance(json.dumps(data))

    def test_nan_rejected(self):
        data = instance_to_dict(make_instance(1))
        text = json.dumps(data).replace(repr(data["Y"][0][0]), "NaN", 1)
        with pytest.raises(InstanceFormatError, match=r"Y\[0\]\[0\]"):
            parse_instance(text)

    def test_malformed(self):
        with pytest.raises(InstanceFormatError, match="invalid JSON"):
            parse_instance('{"version": 1, ')

    @pytest.mark.parametrize("bad", [0, -1, 1.5, True])
    def test_bad_width(self, bad):
        data = instance_to_dict(make_instance(1))
        data["widths"][1] = bad
        with pytest.raises(InstanceFormatError, match=r"widths\[1\]"):
            parse_instance(json.dumps(data))


class TestGenerators:
    def test_seeded(self):
        spec = {"kind": "low-rank-plus-noise", "widths": [3, 2, 3], "n": 6}
        assert generate_instance(spec, 7) == generate_instance(spec, 7)
        assert generate_instance(spec, 7) != generate_instance(spec, 8)

    def test_frozen_value(self):
        inst = generate_instance({"kind": "random-gaussian", "widths": [1, 1], "n": 2}, 0)
        ref = np.random.default_rng(0)
        np.testing.assert_array_equal(inst.X, ref.standard_normal((1, 2)))
        np.testing.assert_array_equal(inst.Y, ref.standard_normal((1, 2)))

    def test_exact_fit(self):
        inst = generate_instance({"kind": "exact-fit", "widths": [3, 1, 2], "n": 5}, 1)
        assert oracle_opt(inst).opt_value <= 1e-10

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            generate_instance({"kind": "nope", "widths": [1, 1], "n": 1})


class TestSDPA:
    def test_header_d2(self):
        inst = ProblemInstance(np.ones((1, 2)), np.ones((1, 2)), (1, 1))
        text = format_sdpa(sdpa_from_relaxation(build_relaxation(assemble_qcqp(inst))))
        lines = text.splitlines()
        assert lines[0] == "24"  # 1 + 1 + 1 + 4 + 4 + 1 + 12 link rows
        assert lines[1] == "5"
        assert lines[2] == "{13, 2, 2, 2, 1}"

    def test_round_trip(self, tmp_path, instance):
        f = assemble_qcqp(instance)
        prob = build_relaxation(f, instance)
        p = tmp_path / "r.dat-s"
        data = export_sdpa(f, prob, p)
        back = parse_sdpa(p)
        assert sdpa_max_difference(data, back) == 0.0
        assert back.m == len(prob.constraints)

    def test_objective_negated(self, small_instance):
        f = assemble_qcqp(small_instance)
        data = sdpa_from_relaxation(build_relaxation(f))
        e00 = [e for e in data.entries[0] if e[:3] == (1, 1, 1)]
        assert e00[0][3] == pytest.approx(-f.h)

    def test_truncated(self):
        with pytest.raises(InstanceFormatError):
            parse_sdpa("1\n1\n")

    def test_block_count_mismatch(self):
        with pytest.raises(InstanceFormatError, match="nBLOCK"):
            parse_sdpa("1\n2\n{3}\n1.0\n")
