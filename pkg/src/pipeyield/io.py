"""Pipeline description files (JSON, schema_version "1") and CSV helpers."""

from __future__ import annotations

import csv
import io
import json
import math

from ._validation import ModelError
from .variation import GateInstance, PipelineModel, StageModel, VariationSpec

__all__ = ["PipelineFileError", "dump_pipeline", "dumps_pipeline", "load_pipeline",
           "parse_pipeline", "pipeline_to_dict", "write_csv"]

SCHEMA_VERSION = "1"

_VARIATION_FIELDS = ("inter_die_fraction", "systematic_fraction", "random_fraction",
                     "total_sigma_ratio", "spatial_corr_length")
_GATE_FIELDS = ("p", "q", "area_coefficient", "x", "L", "U")


class PipelineFileError(ValueError):
    """Malformed or invalid pipeline file; ``location`` names the offending field."""

    def __init__(self, location, message):
        super().__init__(f"{location}: {message}")
        self.location = location


def _number(obj, key, where):
    if key not in obj:
        raise PipelineFileError(f"{where}.{key}", "missing field")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PipelineFileError(f"{where}.{key}", f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise PipelineFileError(f"{where}.{key}", "must be finite")
    return float(value)


def _object(value, where):
    if not isinstance(value, dict):
        raise PipelineFileError(where, f"expected an object, got {type(value).__name__}")
    return value


def _build(where, factory, *args):
    try:
        return factory(*args)
    except ModelError as exc:
        raise PipelineFileError(where, str(exc)) from None


def parse_pipeline(data) -> PipelineModel:
    """Parse file bytes or text into a validated ``PipelineModel``."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise PipelineFileError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    doc = _object(doc, "$")

    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise PipelineFileError("$.schema_version", f"unsupported schema version {version!r}")

    var_doc = _object(doc.get("variation"), "$.variation")
    var_args = [_number(var_doc, k, "$.variation") for k in _VARIATION_FIELDS]
    variation = _build("$.variation", VariationSpec, *var_args)

    stages_doc = doc.get("stages")
    if not isinstance(stages_doc, list) or not stages_doc:
        raise PipelineFileError("$.stages", "expected a non-empty list")
    stages = []
    for i, sd in enumerate(stages_doc):
        where = f"$.stages[{i}]"
        sd = _object(sd, where)
        gates_doc = sd.get("gates")
        if not isinstance(gates_doc, list) or not gates_doc:
            raise PipelineFileError(f"{where}.gates", "expected a non-empty list")
        gates = []
        for j, gd in enumerate(gates_doc):
            gwhere = f"{where}.gates[{j}]"
            gd = _object(gd, gwhere)
            vals = [_number(gd, k, gwhere) for k in _GATE_FIELDS]
            gates.append(_build(gwhere, GateInstance, *vals))
        stages.append(_build(where, StageModel, tuple(gates),
                             _number(sd, "latch_overhead", where), _number(sd, "position", where)))

    corr = doc.get("correlation_matrix")
    if corr is not None:
        if not (isinstance(corr, list) and all(isinstance(r, list) for r in corr)):
            raise PipelineFileError("$.correlation_matrix", "expected a list of rows")
        for r, row in enumerate(corr):
            for c, val in enumerate(row):
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise PipelineFileError(f"$.correlation_matrix[{r}][{c}]", "expected a number")
    return _build("$.correlation_matrix" if corr is not None else "$", PipelineModel,
                  tuple(stages), variation, corr)


def load_pipeline(path) -> PipelineModel:
    with open(path, "rb") as fh:
        return parse_pipeline(fh.read())


def pipeline_to_dict(p: PipelineModel) -> dict:
    v = p.variation
    doc = {
        "schema_version": SCHEMA_VERSION,
        "variation": {k: getattr(v, k) for k in _VARIATION_FIELDS},
        "stages": [
            {
                "position": s.position,
                "latch_overhead": s.latch_overhead,
                "gates": [
                    {"p": g.p, "q": g.q, "area_coefficient": g.area_coefficient,
                     "x": g.x, "L": g.lower, "U": g.upper}
                    for g in s.gates
                ],
            }
            for s in p.stages
        ],
    }
    if p.correlation is not None:
        doc["correlation_matrix"] = [list(row) for row in p.correlation]
    return doc


def dumps_pipeline(p: PipelineModel) -> str:
    return json.dumps(pipeline_to_dict(p), indent=2) + "\n"


def dump_pipeline(p: PipelineModel, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_pipeline(p))


def format_number(x):
    """Locale-free, round-trippable text for a float."""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def write_csv(header, rows, fh=None):
    """Write rows with '.' decimals and LF line ends; returns the text if ``fh`` is None."""
    out = io.StringIO() if fh is None else fh
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_number(v) if isinstance(v, (int, float)) else v for v in row])
    if fh is None:
        return out.getvalue()
    return None
