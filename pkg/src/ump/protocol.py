"""Wire-level data model for the process API.

Every value exchanged between servers, the platform, clients and the UI is
one of the types below, serialized as JSON with stable key order. All types
are immutable and safe to share between threads.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace

PROCESS_ID_RE = re.compile(r"^[A-Za-z0-9_-]+(:[A-Za-z0-9_-]+)?$")

JOB_CONTROL_OPTIONS = frozenset({"sync-execute", "async-execute"})

INPUT_DATA_KINDS = frozenset(
    {"number", "integer", "boolean", "string", "enumeration", "numberGrid", "geoPointList"}
)
OUTPUT_DATA_KINDS = frozenset({"number", "numberGrid", "geoPointList", "table"})

PROBLEM_STATUSES = frozenset({400, 401, 403, 404, 409, 410, 422, 429, 500, 502, 504})

# Conformance classes this implementation declares on every server.
CONFORMANCE_CLASSES = (
    "http://www.opengis.net/spec/ogcapi-processes-1/1.0/conf/core",
    "http://www.opengis.net/spec/ogcapi-processes-1/1.0/conf/json",
    "http://www.opengis.net/spec/ogcapi-processes-1/1.0/conf/ogc-process-description",
)

MEDIA_JSON = "application/json"
MEDIA_PROBLEM = "application/problem+json"


class ProtocolError(Exception):
    """Raised when a document cannot be parsed into a protocol type."""

    def __init__(self, detail: str, status: int = 400):
        super().__init__(detail)
        self.detail = detail
        self.status = status

    def problem(self) -> "ProblemDetail":
        title = {400: "Bad Request", 422: "Unprocessable Entity"}.get(self.status, "Error")
        return ProblemDetail(type="malformed-document", title=title, status=self.status, detail=self.detail)


def split_namespace(process_id: str) -> tuple[str | None, str]:
    """Split `prefix:local` on the first colon; plain IDs have no prefix."""
    if ":" in process_id:
        prefix, local = process_id.split(":", 1)
        return prefix, local
    return None, process_id


def join_namespace(prefix: str, local: str) -> str:
    return f"{prefix}:{local}"


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _is_integer(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _require(cond: bool, detail: str):
    if not cond:
        raise ProtocolError(detail)


@dataclass(frozen=True)
class ProcessSummary:
    id: str
    version: str = "1.0.0"
    title: str = ""
    description: str = ""
    keywords: tuple[str, ...] = ()
    jobControlOptions: frozenset[str] = frozenset({"sync-execute", "async-execute"})

    def validate(self) -> list[str]:
        problems = []
        if not self.id or not PROCESS_ID_RE.match(self.id):
            problems.append(f"id: invalid process identifier {self.id!r}")
        if not self.jobControlOptions:
            problems.append("jobControlOptions: must be non-empty")
        if not set(self.jobControlOptions) <= JOB_CONTROL_OPTIONS:
            problems.append(f"jobControlOptions: unknown option in {sorted(self.jobControlOptions)}")
        return problems

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "version": self.version,
            "title": self.title,
            "description": self.description,
            "keywords": list(self.keywords),
            "jobControlOptions": sorted(self.jobControlOptions),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ProcessSummary":
        _require(isinstance(doc, dict), "process summary must be an object")
        _require(isinstance(doc.get("id"), str), "process summary requires a string id")
        summary = cls(
            id=doc["id"],
            version=doc.get("version", "1.0.0"),
            title=doc.get("title", ""),
            description=doc.get("description", ""),
            keywords=tuple(doc.get("keywords", ())),
            jobControlOptions=frozenset(doc.get("jobControlOptions", ("sync-execute", "async-execute"))),
        )
        problems = summary.validate()
        if problems:
            raise ProtocolError("; ".join(problems))
        return summary


@dataclass(frozen=True)
class InputDescription:
    title: str
    dataKind: str
    minOccurs: int = 1
    maxOccurs: int | str = 1
    bounds: tuple[float, float] | None = None
    allowedValues: tuple | None = None
    defaultValue: object = None
    has_default: bool = False

    def validate(self, name: str = "input") -> list[str]:
        problems = []
        if self.dataKind not in INPUT_DATA_KINDS:
            problems.append(f"{name}: unknown dataKind {self.dataKind!r}")
            return problems
        if self.minOccurs < 0:
            problems.append(f"{name}: minOccurs must be >= 0")
        if self.maxOccurs != "unbounded":
            if not _is_integer(self.maxOccurs) or self.maxOccurs < 1:
                problems.append(f"{name}: maxOccurs must be a positive integer or 'unbounded'")
            elif self.minOccurs > self.maxOccurs:
                problems.append(f"{name}: minOccurs exceeds maxOccurs")
        if self.dataKind == "enumeration" and not self.allowedValues:
            problems.append(f"{name}: enumeration requires allowedValues")
        if self.dataKind != "enumeration" and self.allowedValues:
            problems.append(f"{name}: allowedValues only applies to enumeration")
        if self.bounds is not None:
            if len(self.bounds) != 2 or not all(_is_number(b) for b in self.bounds):
                problems.append(f"{name}: bounds must be a numeric [min, max] pair")
            elif self.bounds[0] > self.bounds[1]:
                problems.append(f"{name}: bounds min exceeds max")
        if self.has_default:
            bad = check_value(self.defaultValue, self)
            if bad:
                problems.append(f"{name}: defaultValue does not validate ({bad})")
        return problems

    def to_dict(self) -> dict:
        doc = {
            "title": self.title,
            "dataKind": self.dataKind,
            "minOccurs": self.minOccurs,
            "maxOccurs": self.maxOccurs,
        }
        if self.bounds is not None:
            doc["bounds"] = list(self.bounds)
        if self.allowedValues is not None:
            doc["allowedValues"] = list(self.allowedValues)
        if self.has_default:
            doc["defaultValue"] = self.defaultValue
        return doc

    @classmethod
    def from_dict(cls, doc: dict, name: str = "input") -> "InputDescription":
        _require(isinstance(doc, dict), f"{name}: input description must be an object")
        desc = cls(
            title=doc.get("title", name),
            dataKind=doc.get("dataKind", ""),
            minOccurs=doc.get("minOccurs", 1),
            maxOccurs=doc.get("maxOccurs", 1),
            bounds=tuple(doc["bounds"]) if doc.get("bounds") is not None else None,
            allowedValues=tuple(doc["allowedValues"]) if doc.get("allowedValues") is not None else None,
            defaultValue=doc.get("defaultValue"),
            has_default="defaultValue" in doc,
        )
        problems = desc.validate(name)
        if problems:
            raise ProtocolError("; ".join(problems))
        return desc


@dataclass(frozen=True)
class OutputDescription:
    title: str
    dataKind: str

    def validate(self, name: str = "output") -> list[str]:
        if self.dataKind not in OUTPUT_DATA_KINDS:
            return [f"{name}: unknown output dataKind {self.dataKind!r}"]
        return []

    def to_dict(self) -> dict:
        return {"title": self.title, "dataKind": self.dataKind}

    @classmethod
    def from_dict(cls, doc: dict, name: str = "output") -> "OutputDescription":
        _require(isinstance(doc, dict), f"{name}: output description must be an object")
        desc = cls(title=doc.get("title", name), dataKind=doc.get("dataKind", ""))
        problems = desc.validate(name)
        if problems:
            raise ProtocolError("; ".join(problems))
        return desc


@dataclass(frozen=True)
class ProcessDescription:
    summary: ProcessSummary
    inputs: dict[str, InputDescription] = field(default_factory=dict)
    outputs: dict[str, OutputDescription] = field(default_factory=dict)

    @property
    def id(self) -> str:
        return self.summary.id

    def validate(self) -> list[str]:
        problems = self.summary.validate()
        for name, inp in self.inputs.items():
            problems.extend(inp.validate(name))
        for name, out in self.outputs.items():
            problems.extend(out.validate(name))
        return problems

    def require_valid(self) -> "ProcessDescription":
        problems = self.validate()
        if problems:
            raise ProtocolError("; ".join(problems))
        return self

    def with_id(self, new_id: str) -> "ProcessDescription":
        return replace(self, summary=replace(self.summary, id=new_id))

    def to_dict(self) -> dict:
        return {
            "summary": self.summary.to_dict(),
            "inputs": {name: inp.to_dict() for name, inp in sorted(self.inputs.items())},
            "outputs": {name: out.to_dict() for name, out in sorted(self.outputs.items())},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ProcessDescription":
        _require(isinstance(doc, dict), "process description must be an object")
        _require("summary" in doc, "process description requires a summary")
        return cls(
            summary=ProcessSummary.from_dict(doc["summary"]),
            inputs={
                name: InputDescription.from_dict(d, name)
                for name, d in doc.get("inputs", {}).items()
            },
            outputs={
                name: OutputDescription.from_dict(d, name)
                for name, d in doc.get("outputs", {}).items()
            },
        )


@dataclass(frozen=True)
class ExecuteRequest:
    inputs: dict = field(default_factory=dict)
    preferAsync: bool = False
    requestedOutputs: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        doc = {"inputs": dict(self.inputs), "preferAsync": self.preferAsync}
        if self.requestedOutputs is not None:
            doc["requestedOutputs"] = list(self.requestedOutputs)
        return doc

    @classmethod
    def from_dict(cls, doc: dict, prefer_async: bool | None = None) -> "ExecuteRequest":
        _require(isinstance(doc, dict), "execute request must be an object")
        inputs = doc.get("inputs", {})
        _require(isinstance(inputs, dict), "inputs must be an object")
        requested = doc.get("requestedOutputs")
        if requested is not None:
            _require(
                isinstance(requested, list) and all(isinstance(o, str) for o in requested),
                "requestedOutputs must be a list of output names",
            )
            requested = tuple(requested)
        if prefer_async is None:
            prefer_async = bool(doc.get("preferAsync", False))
        return cls(inputs=inputs, preferAsync=prefer_async, requestedOutputs=requested)


@dataclass(frozen=True)
class ProblemDetail:
    type: str
    title: str
    status: int
    detail: str
    violations: tuple[str, ...] | None = None

    def validate(self) -> list[str]:
        if self.status not in PROBLEM_STATUSES:
            return [f"status: {self.status} not in the allowed status set"]
        return []

    def to_dict(self) -> dict:
        doc = {"type": self.type, "title": self.title, "status": self.status, "detail": self.detail}
        if self.violations is not None:
            doc["violations"] = list(self.violations)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ProblemDetail":
        _require(isinstance(doc, dict), "problem detail must be an object")
        violations = doc.get("violations")
        pd = cls(
            type=doc.get("type", "about:blank"),
            title=doc.get("title", ""),
            status=doc.get("status", 500),
            detail=doc.get("detail", ""),
            violations=tuple(violations) if violations is not None else None,
        )
        problems = pd.validate()
        if problems:
            raise ProtocolError("; ".join(problems))
        return pd


@dataclass(frozen=True)
class ConformanceDeclaration:
    conformsTo: tuple[str, ...] = CONFORMANCE_CLASSES

    def validate(self) -> list[str]:
        missing = [c for c in CONFORMANCE_CLASSES if c not in self.conformsTo]
        if missing:
            return [f"conformsTo: missing required classes {missing}"]
        return []

    def to_dict(self) -> dict:
        return {"conformsTo": list(self.conformsTo)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ConformanceDeclaration":
        _require(isinstance(doc, dict), "conformance declaration must be an object")
        decl = cls(conformsTo=tuple(doc.get("conformsTo", ())))
        problems = decl.validate()
        if problems:
            raise ProtocolError("; ".join(problems))
        return decl


# ---------------------------------------------------------------------------
# Value validation


@dataclass(frozen=True)
class Violation:
    """One failed validation rule, naming the offending input."""

    input: str
    rule: str

    def __str__(self) -> str:
        return f"{self.input}: {self.rule}"


def check_value(value, desc: InputDescription) -> str | None:
    """Check a single occurrence against an InputDescription.

    Returns None when the value conforms, otherwise a short rule description.
    """
    kind = desc.dataKind
    if kind == "number":
        if not _is_number(value):
            return "wrong kind, expected number"
    elif kind == "integer":
        if not _is_integer(value):
            return "wrong kind, expected integer"
    elif kind == "boolean":
        if not isinstance(value, bool):
            return "wrong kind, expected boolean"
    elif kind == "string":
        if not isinstance(value, str):
            return "wrong kind, expected string"
    elif kind == "enumeration":
        if value not in (desc.allowedValues or ()):
            return "not in allowed values"
    elif kind == "numberGrid":
        return _check_number_grid(value)
    elif kind == "geoPointList":
        return _check_geo_point_list(value)
    else:
        return f"unknown dataKind {kind!r}"

    if kind in ("number", "integer") and desc.bounds is not None:
        lo, hi = desc.bounds
        if not (lo <= value <= hi):
            return "out of bounds"
    return None


def _check_number_grid(value) -> str | None:
    if not isinstance(value, dict):
        return "wrong kind, expected numberGrid object"
    for key in ("width", "height", "cellSize", "origin", "values"):
        if key not in value:
            return f"numberGrid missing field {key!r}"
    width, height = value["width"], value["height"]
    if not (_is_integer(width) and width > 0 and _is_integer(height) and height > 0):
        return "numberGrid width/height must be positive integers"
    if not (_is_number(value["cellSize"]) and value["cellSize"] > 0):
        return "numberGrid cellSize must be a positive number"
    origin = value["origin"]
    if not (isinstance(origin, (list, tuple)) and len(origin) == 2 and all(_is_number(c) for c in origin)):
        return "numberGrid origin must be [x, y]"
    values = value["values"]
    if not isinstance(values, list) or len(values) != width * height:
        return "numberGrid values length must equal width*height"
    if not all(_is_number(v) for v in values):
        return "numberGrid values must all be finite numbers"
    return None


def _check_geo_point_list(value) -> str | None:
    if not isinstance(value, list):
        return "wrong kind, expected geoPointList array"
    for i, point in enumerate(value):
        if not isinstance(point, dict):
            return f"geoPointList[{i}] must be an object"
        if not (_is_number(point.get("x")) and _is_number(point.get("y"))):
            return f"geoPointList[{i}] requires numeric x and y"
        if "attributes" in point and not isinstance(point["attributes"], dict):
            return f"geoPointList[{i}].attributes must be an object"
    return None


def _multiple_allowed(desc: InputDescription) -> bool:
    return desc.maxOccurs == "unbounded" or desc.maxOccurs > 1


def validate_execute_request(req: ExecuteRequest, desc: ProcessDescription) -> list[Violation]:
    """Validate inputs against a process description; empty list means ok.

    Inputs allowing more than one occurrence are carried as a JSON array of
    values; single-occurrence inputs are carried bare.
    """
    violations: list[Violation] = []

    for name, inp in desc.inputs.items():
        if name not in req.inputs:
            if inp.minOccurs >= 1:
                violations.append(Violation(name, "required, absent"))
            continue
        value = req.inputs[name]
        if _multiple_allowed(inp):
            if not isinstance(value, list):
                violations.append(Violation(name, "wrong kind, expected array of occurrences"))
                continue
            count = len(value)
            if count < inp.minOccurs:
                violations.append(Violation(name, "too few occurrences"))
            if inp.maxOccurs != "unbounded" and count > inp.maxOccurs:
                violations.append(Violation(name, "too many occurrences"))
            for occurrence in value:
                bad = check_value(occurrence, inp)
                if bad:
                    violations.append(Violation(name, bad))
                    break
        else:
            bad = check_value(value, inp)
            if bad:
                violations.append(Violation(name, bad))

    for name in req.inputs:
        if name not in desc.inputs:
            violations.append(Violation(name, "not declared"))

    if req.requestedOutputs is not None:
        for out in req.requestedOutputs:
            if out not in desc.outputs:
                violations.append(Violation("requestedOutputs", f"unknown output {out!r}"))

    return violations


def apply_defaults(req: ExecuteRequest, desc: ProcessDescription) -> ExecuteRequest:
    """Fill every absent input that declares a default; never overwrites."""
    filled = dict(req.inputs)
    for name, inp in desc.inputs.items():
        if name not in filled and inp.has_default:
            filled[name] = inp.defaultValue
    return replace(req, inputs=filled)


# ---------------------------------------------------------------------------
# Serialization

_TYPE_PARSERS = {
    ProcessSummary: ProcessSummary.from_dict,
    ProcessDescription: ProcessDescription.from_dict,
    ExecuteRequest: ExecuteRequest.from_dict,
    ProblemDetail: ProblemDetail.from_dict,
    ConformanceDeclaration: ConformanceDeclaration.from_dict,
}


def serialize(value) -> bytes:
    """Deterministic JSON bytes (stable key order) for any protocol type."""
    return json.dumps(value.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def parse(data: bytes, cls):
    """Parse JSON bytes into a protocol type; malformed input raises ProtocolError."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed JSON document: {exc}") from exc
    parser = _TYPE_PARSERS.get(cls)
    if parser is None:
        raise ProtocolError(f"no parser for {cls!r}", status=500)
    return parser(doc)
