import math
import random

import pytest

from ump.protocol import (
    CONFORMANCE_CLASSES,
    ConformanceDeclaration,
    ExecuteRequest,
    InputDescription,
    OutputDescription,
    ProblemDetail,
    ProcessDescription,
    ProcessSummary,
    ProtocolError,
    apply_defaults,
    join_namespace,
    parse,
    serialize,
    split_namespace,
    validate_execute_request,
)

from conftest import make_description, number_input


def heat_like_description():
    return make_description(
        "heat-demo",
        inputs={
            "grid": InputDescription(title="grid", dataKind="numberGrid"),
            "alpha": InputDescription(
                title="alpha", dataKind="number", minOccurs=0,
                bounds=(0.0, 0.5), defaultValue=0.25, has_default=True,
            ),
            "iterations": InputDescription(title="iterations", dataKind="integer"),
        },
        outputs={"grid": OutputDescription(title="grid", dataKind="numberGrid")},
    )


def small_grid():
    return {"width": 2, "height": 2, "cellSize": 1.0, "origin": [0.0, 0.0],
            "values": [1.0, 2.0, 3.0, 4.0]}


class TestValidateExecuteRequest:
    def test_missing_required_input_named(self):
        req = ExecuteRequest(inputs={"grid": small_grid(), "alpha": 0.1})
        violations = validate_execute_request(req, heat_like_description())
        assert [str(v) for v in violations] == ["iterations: required, absent"]

    def test_all_defaults_optional_inputs_ok(self):
        desc = make_description(
            "defaults-only",
            inputs={
                "a": number_input(default=1.0, required=False),
                "b": number_input(default=2.0, required=False),
            },
        )
        req = apply_defaults(ExecuteRequest(inputs={}), desc)
        assert validate_execute_request(req, desc) == []

    def test_out_of_bounds(self):
        desc = make_description("b", inputs={"alpha": number_input(0.0, 0.5)})
        violations = validate_execute_request(ExecuteRequest(inputs={"alpha": 0.7}), desc)
        assert [str(v) for v in violations] == ["alpha: out of bounds"]

    def test_bounds_against_independent_predicate(self):
        # independent oracle: direct interval arithmetic on 20 randomized pairs
        rng = random.Random(4242)
        for _ in range(20):
            lo = rng.uniform(-50, 50)
            hi = lo + rng.uniform(0, 100)
            value = rng.uniform(-100, 200)
            desc = make_description("b", inputs={"x": number_input(lo, hi)})
            violations = validate_execute_request(ExecuteRequest(inputs={"x": value}), desc)
            expected_ok = lo <= value <= hi
            assert (violations == []) == expected_ok, (value, lo, hi)

    def test_undeclared_input_named(self):
        desc = make_description("u", inputs={})
        violations = validate_execute_request(ExecuteRequest(inputs={"bogus": 1}), desc)
        assert [str(v) for v in violations] == ["bogus: not declared"]

    def test_wrong_kind(self):
        desc = make_description("k", inputs={"n": number_input()})
        violations = validate_execute_request(ExecuteRequest(inputs={"n": "nope"}), desc)
        assert violations and violations[0].input == "n"

    def test_enumeration_allowed_values(self):
        desc = make_description("e", inputs={
            "mode": InputDescription(title="mode", dataKind="enumeration",
                                     allowedValues=("fast", "slow")),
        })
        ok = validate_execute_request(ExecuteRequest(inputs={"mode": "fast"}), desc)
        bad = validate_execute_request(ExecuteRequest(inputs={"mode": "medium"}), desc)
        assert ok == []
        assert [str(v) for v in bad] == ["mode: not in allowed values"]

    def test_occurrence_counts(self):
        desc = make_description("m", inputs={
            "xs": InputDescription(title="xs", dataKind="number", minOccurs=2, maxOccurs=3),
        })
        too_few = validate_execute_request(ExecuteRequest(inputs={"xs": [1.0]}), desc)
        too_many = validate_execute_request(ExecuteRequest(inputs={"xs": [1.0, 2.0, 3.0, 4.0]}), desc)
        just_right = validate_execute_request(ExecuteRequest(inputs={"xs": [1.0, 2.0]}), desc)
        assert [str(v) for v in too_few] == ["xs: too few occurrences"]
        assert [str(v) for v in too_many] == ["xs: too many occurrences"]
        assert just_right == []

    def test_requested_outputs_subset(self):
        desc = heat_like_description()
        req = ExecuteRequest(inputs={"grid": small_grid(), "iterations": 1},
                             requestedOutputs=("grid", "bogus"))
        violations = validate_execute_request(req, desc)
        assert [str(v) for v in violations] == ["requestedOutputs: unknown output 'bogus'"]

    def test_monotone_in_optional_inputs(self):
        desc = make_description("mono", inputs={
            "a": number_input(required=True),
            "b": number_input(required=False),
        })
        base = ExecuteRequest(inputs={"a": 1.0})
        assert validate_execute_request(base, desc) == []
        extended = ExecuteRequest(inputs={"a": 1.0, "b": 2.0})
        assert validate_execute_request(extended, desc) == []

    def test_number_grid_shape_mismatch(self):
        grid = small_grid()
        grid["values"] = [1.0, 2.0]
        desc = make_description("g", inputs={"grid": InputDescription(title="g", dataKind="numberGrid")})
        violations = validate_execute_request(ExecuteRequest(inputs={"grid": grid}), desc)
        assert violations and "width*height" in violations[0].rule

    def test_geo_point_list(self):
        desc = make_description("p", inputs={"pts": InputDescription(title="p", dataKind="geoPointList")})
        good = [{"x": 1.0, "y": 2.0, "attributes": {"level": 60}}, {"x": 0, "y": 0}]
        bad = [{"x": "a", "y": 2.0}]
        assert validate_execute_request(ExecuteRequest(inputs={"pts": good}), desc) == []
        assert validate_execute_request(ExecuteRequest(inputs={"pts": bad}), desc) != []


class TestApplyDefaults:
    def test_single_default_fill(self):
        desc = make_description("d", inputs={"alpha": number_input(default=0.25, required=False)})
        out = apply_defaults(ExecuteRequest(inputs={}), desc)
        assert out.inputs == {"alpha": 0.25}

    def test_never_overwrites(self):
        desc = make_description("d", inputs={"alpha": number_input(default=0.25, required=False)})
        out = apply_defaults(ExecuteRequest(inputs={"alpha": 0.1}), desc)
        assert out.inputs == {"alpha": 0.1}

    def test_defaults_compose_with_validation(self):
        # 100 random descriptions in which every input has a valid default:
        # apply_defaults on any partial request must validate clean
        rng = random.Random(99)
        kinds = ["number", "integer", "boolean", "string", "enumeration"]
        for _ in range(100):
            inputs = {}
            for i in range(rng.randint(1, 6)):
                kind = rng.choice(kinds)
                name = f"in{i}"
                if kind == "number":
                    lo, hi = sorted((rng.uniform(-10, 10), rng.uniform(-10, 10)))
                    inputs[name] = InputDescription(
                        title=name, dataKind="number", bounds=(lo, hi),
                        defaultValue=rng.uniform(lo, hi), has_default=True)
                elif kind == "integer":
                    inputs[name] = InputDescription(
                        title=name, dataKind="integer", defaultValue=rng.randint(-5, 5),
                        has_default=True)
                elif kind == "boolean":
                    inputs[name] = InputDescription(
                        title=name, dataKind="boolean", defaultValue=bool(rng.getrandbits(1)),
                        has_default=True)
                elif kind == "string":
                    inputs[name] = InputDescription(
                        title=name, dataKind="string", defaultValue="s" * rng.randint(0, 3),
                        has_default=True)
                else:
                    allowed = tuple(f"v{j}" for j in range(rng.randint(1, 4)))
                    inputs[name] = InputDescription(
                        title=name, dataKind="enumeration", allowedValues=allowed,
                        defaultValue=rng.choice(allowed), has_default=True)
            desc = make_description("prop", inputs=inputs)
            provided = {
                name: inp.defaultValue for name, inp in inputs.items() if rng.random() < 0.5
            }
            req = apply_defaults(ExecuteRequest(inputs=provided), desc)
            assert validate_execute_request(req, desc) == []


class TestRoundTrip:
    def test_minimal_summary(self):
        summary = ProcessSummary(id="heat-1")
        assert parse(serialize(summary), ProcessSummary) == summary

    def test_execute_request_with_grid(self):
        req = ExecuteRequest(inputs={"grid": small_grid()}, preferAsync=True,
                             requestedOutputs=("grid",))
        back = parse(serialize(req), ExecuteRequest)
        assert back == req
        assert back.inputs["grid"]["values"] == [1.0, 2.0, 3.0, 4.0]

    def test_truncated_document_is_400(self):
        data = serialize(ProcessSummary(id="x"))[:-4]
        with pytest.raises(ProtocolError) as err:
            parse(data, ProcessSummary)
        assert err.value.status == 400

    def test_all_types_round_trip(self):
        desc = heat_like_description()
        values = [
            ProcessSummary(id="a-b_c:d", keywords=("k1", "k2"),
                           jobControlOptions=frozenset({"sync-execute"})),
            desc,
            ExecuteRequest(inputs={"alpha": 0.5}, preferAsync=False),
            ProblemDetail(type="quota-exceeded", title="Too Many Requests",
                          status=429, detail="limit", violations=("a: b",)),
            ConformanceDeclaration(),
        ]
        for value in values:
            assert parse(serialize(value), type(value)) == value

    def test_serialization_deterministic(self):
        desc = heat_like_description()
        assert serialize(desc) == serialize(heat_like_description())

    def test_conformance_requires_core_classes(self):
        with pytest.raises(ProtocolError):
            ConformanceDeclaration.from_dict({"conformsTo": ["something-else"]})
        decl = ConformanceDeclaration()
        assert set(CONFORMANCE_CLASSES) <= set(decl.conformsTo)

    def test_problem_status_closed_set(self):
        with pytest.raises(ProtocolError):
            ProblemDetail.from_dict({"type": "x", "title": "t", "status": 418, "detail": "d"})


class TestInvariants:
    def test_namespace_split_rejoin_identity(self):
        for pid in ["alpha:heat-diffusion", "a:b", "plain", "x_1:y-2"]:
            prefix, local = split_namespace(pid)
            rebuilt = join_namespace(prefix, local) if prefix is not None else local
            assert rebuilt == pid

    def test_process_id_pattern(self):
        ProcessSummary.from_dict({"id": "ok-id_1:local"})
        for bad in ["", "a:b:c", "sp ace", "Ümlaut", ":lead", "trail:"]:
            with pytest.raises(ProtocolError):
                ProcessSummary.from_dict({"id": bad})

    def test_job_control_options_non_empty(self):
        with pytest.raises(ProtocolError):
            ProcessSummary.from_dict({"id": "x", "jobControlOptions": []})

    def test_default_must_validate(self):
        with pytest.raises(ProtocolError):
            InputDescription.from_dict(
                {"dataKind": "number", "bounds": [0, 1], "defaultValue": 5}, "bad")

    def test_min_le_max_occurs(self):
        with pytest.raises(ProtocolError):
            InputDescription.from_dict({"dataKind": "number", "minOccurs": 3, "maxOccurs": 2}, "x")

    def test_non_finite_rejected(self):
        desc = make_description("f", inputs={"n": number_input()})
        violations = validate_execute_request(ExecuteRequest(inputs={"n": math.inf}), desc)
        assert violations != []
