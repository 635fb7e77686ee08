"""File formats: structures CSV, decisions CSV and the JSON model file."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .behavior import BehaviorModel, FewaParams, InitialAttraction, ModelKind
from .core import GameStructure
from .decisions import DECISION_COLUMNS, normalize_frame, sort_frame, validate_decisions
from .errors import (
    CorruptFile,
    DataError,
    DomainError,
    DuplicateId,
    ParseError,
    SchemaVersionMismatch,
)
from .features import DYNAMIC_SCHEMA, SCHEMA_VERSION, STATIC_SCHEMA
from .glm import FittedGlm

STRUCTURE_COLUMNS = ["id", "error", "delta", "infinity", "continuous", "risk", "r1", "r2", "cooperation", "dataset"]
MODEL_FORMAT = "coopredict.model/1"
FIXTURE_NAME = "structures.csv"


# --- structures ----------------------------------------------------------------


def _parse_float(value: str, row: int, column: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise ParseError(f"not a number: {value!r}", row, column) from None
    if not math.isfinite(x):
        raise ParseError(f"non-finite value {value!r}", row, column)
    return x


def _parse_flag(value: str, row: int, column: str) -> bool:
    if value.strip() not in ("0", "1"):
        raise ParseError(f"flag must be 0 or 1, got {value!r}", row, column)
    return value.strip() == "1"


def parse_structures(text: str) -> list[GameStructure]:
    reader = csv.reader(_io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty structures file") from None
    if [h.strip() for h in header] != STRUCTURE_COLUMNS:
        raise ParseError(f"header must be {','.join(STRUCTURE_COLUMNS)}", 1)

    out: list[GameStructure] = []
    seen: set[str] = set()
    for line_no, fields in enumerate(reader, start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(STRUCTURE_COLUMNS):
            raise ParseError(f"expected {len(STRUCTURE_COLUMNS)} fields, found {len(fields)}", line_no)
        raw = dict(zip(STRUCTURE_COLUMNS, (f.strip() for f in fields)))
        sid = raw["id"]
        if not sid:
            raise ParseError("empty id", line_no, "id")
        if sid in seen:
            raise DuplicateId(f"row {line_no}: duplicate structure id {sid!r}")
        seen.add(sid)
        coop = raw["cooperation"]
        try:
            game = GameStructure(
                id=sid,
                error=_parse_float(raw["error"], line_no, "error"),
                delta=_parse_float(raw["delta"], line_no, "delta"),
                infinite=_parse_flag(raw["infinity"], line_no, "infinity"),
                continuous=_parse_flag(raw["continuous"], line_no, "continuous"),
                risk=_parse_flag(raw["risk"], line_no, "risk"),
                r1=_parse_float(raw["r1"], line_no, "r1"),
                r2=_parse_float(raw["r2"], line_no, "r2"),
                dataset=raw["dataset"],
                observed_cooperation=_parse_float(coop, line_no, "cooperation") if coop else None,
            )
        except DomainError as exc:
            raise DomainError(f"row {line_no}: {exc}") from None
        out.append(game)
    return out


def load_structures(path: str | Path) -> list[GameStructure]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    return parse_structures(text)


def _fmt_plain(x: float) -> str:
    return repr(float(x))


def structures_to_csv(structures: Iterable[GameStructure]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STRUCTURE_COLUMNS)
    for s in structures:
        w.writerow(
            [
                s.id,
                _fmt_plain(s.error),
                _fmt_plain(s.delta),
                int(s.infinite),
                int(s.continuous),
                int(s.risk),
                _fmt_plain(s.r1),
                _fmt_plain(s.r2),
                "" if s.observed_cooperation is None else _fmt_plain(s.observed_cooperation),
                s.dataset,
            ]
        )
    return buf.getvalue()


def fixture_text() -> str:
    return resources.files("coopredict").joinpath("data", FIXTURE_NAME).read_text()


def fixture_sha256() -> str:
    return hashlib.sha256(fixture_text().encode()).hexdigest()


def bundled_structures() -> list[GameStructure]:
    """The thirty experimental designs shipped with the package."""
    return parse_structures(fixture_text())


# --- decisions -----------------------------------------------------------------


def parse_decisions(text: str, structures: Sequence[GameStructure] | None = None) -> pd.DataFrame:
    try:
        raw = pd.read_csv(_io.StringIO(text), dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"unreadable decisions CSV: {exc}") from None
    if list(raw.columns) != DECISION_COLUMNS:
        raise ParseError(f"header must be {','.join(DECISION_COLUMNS)}", 1)
    for col in ("action", "partner_action"):
        bad = ~raw[col].isin(["C", "D"])
        if bad.any():
            i = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(f"action must be C or D, got {raw[col].iloc[i]!r}", i + 2, col)
    period = pd.to_numeric(raw["period"], errors="coerce")
    bad = period.isna() | (period != period.round())
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError(f"period must be an integer, got {raw['period'].iloc[i]!r}", i + 2, "period")
    for col in ("structure_id", "interaction_id", "player_id"):
        empty = raw[col].str.strip() == ""
        if empty.any():
            raise ParseError("empty identifier", int(np.flatnonzero(empty.to_numpy())[0]) + 2, col)
    df = pd.DataFrame(
        {
            "structure_id": raw["structure_id"],
            "interaction_id": raw["interaction_id"],
            "player_id": raw["player_id"],
            "period": period.astype(np.int64),
            "action": (raw["action"] == "C").astype(np.int8),
            "partner_action": (raw["partner_action"] == "C").astype(np.int8),
        }
    )
    df = normalize_frame(df)
    validate_decisions(df, structures)
    return df


def load_decisions(path: str | Path, structures: Sequence[GameStructure] | None = None) -> pd.DataFrame:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    return parse_decisions(text, structures)


def decisions_to_csv(df: pd.DataFrame) -> str:
    out = sort_frame(df)[DECISION_COLUMNS].copy()
    out["action"] = np.where(out["action"] == 1, "C", "D")
    out["partner_action"] = np.where(out["partner_action"] == 1, "C", "D")
    return out.to_csv(index=False, lineterminator="\n")


# --- canonical JSON ------------------------------------------------------------


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def canonical_json(obj, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, 2-space indent, floats at 17 significant digits."""
    pad = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [canonical_json(v, indent + 1) for v in obj]
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(items) + "]"
        inner = ",\n".join(f"{pad}  {v}" for v in items)
        return "[\n" + inner + f"\n{pad}]" if items else "[]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        lines = [
            f"{pad}  {json.dumps(str(k))}: {canonical_json(obj[k], indent + 1)}" for k in sorted(obj, key=str)
        ]
        return "{\n" + ",\n".join(lines) + f"\n{pad}}}"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# --- models --------------------------------------------------------------------


def _glm_doc(glm: FittedGlm | None):
    if glm is None:
        return None
    return {
        "aliased": list(glm.aliased),
        "converged": bool(glm.converged),
        "iterations": int(glm.iterations),
        "log_likelihood": float(glm.log_likelihood),
        "names": list(glm.schema.names),
        "standard_errors": [float(x) for x in glm.standard_errors],
        "weights": [float(x) for x in glm.weights],
    }


def model_document(model: BehaviorModel, include_training: bool = True) -> dict:
    fewa = None
    if model.fewa_params is not None:
        fewa = {
            "initial_attraction_mode": model.fewa_params.initial_attraction_mode.value,
            "lambda": float(model.fewa_params.lam),
        }
    return {
        "baseline_rate": None if model.baseline_rate is None else float(model.baseline_rate),
        "dynamic": _glm_doc(model.dynamic_glm),
        "feature_schema_version": SCHEMA_VERSION,
        "fewa": fewa,
        "format": MODEL_FORMAT,
        "kind": model.kind.value,
        "static": _glm_doc(model.static_glm),
        "toolkit_version": __version__,
        "training": model.training if include_training else None,
    }


def model_to_json(model: BehaviorModel, include_training: bool = True) -> str:
    return canonical_json(model_document(model, include_training)) + "\n"


def _glm_from_doc(doc, schema) -> FittedGlm | None:
    if doc is None:
        return None
    names = tuple(doc["names"])
    if names != schema.names:
        unknown = sorted(set(names) - set(schema.names))
        detail = f"unknown features {unknown}" if unknown else "feature order differs"
        raise SchemaVersionMismatch(f"{schema.kind.value} component: {detail}")
    nan = float("nan")
    return FittedGlm(
        schema=schema,
        weights=np.array(doc["weights"], dtype=float),
        standard_errors=np.array([nan if v is None else v for v in doc["standard_errors"]], dtype=float),
        log_likelihood=nan if doc.get("log_likelihood") is None else float(doc["log_likelihood"]),
        converged=bool(doc.get("converged", False)),
        iterations=int(doc.get("iterations", 0)),
        aliased=tuple(doc.get("aliased", ())),
    )


def model_from_json(text: str) -> BehaviorModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise CorruptFile(f"not a {MODEL_FORMAT} document")
    if doc.get("feature_schema_version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"model uses feature schema {doc.get('feature_schema_version')!r}, this toolkit reads {SCHEMA_VERSION!r}"
        )
    try:
        fewa = doc["fewa"]
        model = BehaviorModel(
            kind=ModelKind(doc["kind"]),
            static_glm=_glm_from_doc(doc["static"], STATIC_SCHEMA),
            dynamic_glm=_glm_from_doc(doc["dynamic"], DYNAMIC_SCHEMA),
            baseline_rate=doc["baseline_rate"],
            fewa_params=None
            if fewa is None
            else FewaParams(float(fewa["lambda"]), InitialAttraction(fewa["initial_attraction_mode"])),
            training=doc.get("training"),
        )
    except SchemaVersionMismatch:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"malformed model document: {exc}") from None
    return model


def save_model(model: BehaviorModel, path: str | Path) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path: str | Path) -> BehaviorModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    return model_from_json(text)
