"""
Text formats: decay traces, the sample table and fit-result records.

Trace files
    Lines starting with ``#`` hold ``key = value`` metadata (``sample_id``,
    ``units``, ``field_mT``, anything else is preserved). Data rows are comma
    or whitespace separated ``tau_us, signal[, sigma]``; the first data row
    may be the column header. Blank lines are ignored.

Sample tables
    CSV with a header row naming at least ``id``, ``p1_conc`` and
    ``nv_conc`` (units of 1e17 cm^-3); ``dose`` (1e16 e/cm^2) is optional.

Results
    JSON Lines, one fit per line, each object tagged
    ``"schema": "nvecho.fit"`` and ``"schema_version": 1``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from importlib import resources
from typing import Iterable, List, Optional

import numpy as np

from .errors import ParseError, SchemaVersionError
from .fitting.solver import FitResult
from .fitting.trace import DecayTrace
from .models import SampleRecord

TRACE_COLUMNS = ("tau_us", "signal", "sigma")
SAMPLE_COLUMNS = ("id", "p1_conc", "nv_conc")
RESULTS_SCHEMA = "nvecho.fit"
RESULTS_SCHEMA_VERSION = 1

_SPLIT = re.compile(r"\s*,\s*|\s+")


def _number(text, line):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value: {text!r}", line)
    return v


def parse_trace(text: str) -> DecayTrace:
    """Parse trace-file text into a :class:`DecayTrace`."""
    meta = {}
    rows = []
    ncols = None
    header_seen = False
    prev_tau = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        cells = [c for c in _SPLIT.split(line) if c != ""]
        if not rows and not header_seen and cells and cells[0].lower() == TRACE_COLUMNS[0]:
            names = tuple(c.lower() for c in cells)
            if names not in (TRACE_COLUMNS[:2], TRACE_COLUMNS):
                raise ParseError(f"unknown column header {cells!r}", lineno)
            ncols = len(names)
            header_seen = True
            continue
        if ncols is None:
            ncols = len(cells)
        if len(cells) != ncols or ncols not in (2, 3):
            raise ParseError(f"expected {ncols if ncols in (2, 3) else '2 or 3'} columns, got {len(cells)}", lineno)
        values = [_number(c, lineno) for c in cells]
        if values[0] < 0:
            raise ParseError("tau must be >= 0", lineno)
        if prev_tau is not None and values[0] <= prev_tau:
            raise ParseError(f"tau {cells[0]} is not greater than the previous value", lineno)
        if ncols == 3 and values[2] <= 0:
            raise ParseError("sigma must be > 0", lineno)
        prev_tau = values[0]
        rows.append(values)
    if not rows:
        raise ParseError("no data rows")
    data = np.array(rows)
    sample_id = meta.pop("sample_id", None)
    return DecayTrace(
        tau=data[:, 0],
        signal=data[:, 1],
        sigma=data[:, 2] if data.shape[1] == 3 else None,
        sample_id=sample_id,
        meta=meta,
    )


def write_trace(trace: DecayTrace) -> str:
    """Serialize a trace; ``sample_id`` first, other metadata keys sorted."""
    out = io.StringIO()
    if trace.sample_id is not None:
        out.write(f"# sample_id = {trace.sample_id}\n")
    for key in sorted(trace.meta):
        out.write(f"# {key} = {trace.meta[key]}\n")
    has_sigma = trace.sigma is not None
    out.write(",".join(TRACE_COLUMNS if has_sigma else TRACE_COLUMNS[:2]) + "\n")
    for i in range(len(trace)):
        cells = [repr(float(trace.tau[i])), repr(float(trace.signal[i]))]
        if has_sigma:
            cells.append(repr(float(trace.sigma[i])))
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def read_trace(path) -> DecayTrace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())


def parse_samples(text: str) -> List[SampleRecord]:
    """Parse a sample table; raises :class:`ParseError` naming missing columns."""
    lines = [(n, l) for n, l in enumerate(text.splitlines(), start=1) if l.strip() and not l.lstrip().startswith("#")]
    if not lines:
        raise ParseError("empty sample table")
    reader = csv.reader(io.StringIO("\n".join(l for _, l in lines)), skipinitialspace=True)
    rows = list(reader)
    header = [h.strip() for h in rows[0]]
    for col in SAMPLE_COLUMNS:
        if col not in header:
            raise ParseError(f"missing required column {col!r}", lines[0][0])
    idx = {name: header.index(name) for name in header}
    records = []
    seen = set()
    for (lineno, _), row in zip(lines[1:], rows[1:]):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        sid = row[idx["id"]].strip()
        if not sid:
            raise ParseError("empty sample id", lineno)
        if sid in seen:
            raise ParseError(f"duplicate sample id {sid!r}", lineno)
        seen.add(sid)
        dose = None
        if "dose" in idx and row[idx["dose"]].strip():
            dose = _number(row[idx["dose"]], lineno)
        p1 = _number(row[idx["p1_conc"]], lineno)
        nv = _number(row[idx["nv_conc"]], lineno)
        if p1 < 0 or nv < 0 or (dose is not None and dose < 0):
            raise ParseError("concentrations and dose must be >= 0", lineno)
        records.append(SampleRecord(id=sid, p1_conc=p1, nv_conc=nv, dose=dose))
    return records


def read_samples(path) -> List[SampleRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_samples(fh.read())


def hpht_samples() -> List[SampleRecord]:
    """The nine HPHT samples bundled with the package."""
    text = resources.files("nvecho").joinpath("data/hpht_samples.csv").read_text(encoding="utf-8")
    return parse_samples(text)


def _encode_float(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _decode_float(v):
    return float(v)


def result_to_record(result: FitResult, source: Optional[str] = None) -> dict:
    rec = {
        "schema": RESULTS_SCHEMA,
        "schema_version": RESULTS_SCHEMA_VERSION,
        "model": result.model,
        "sample_id": result.sample_id,
        "param_names": list(result.param_names),
        "units": list(result.units),
        "params": [_encode_float(v) for v in result.params],
        "covariance": [[_encode_float(v) for v in row] for row in result.covariance],
        "residual_norm": _encode_float(result.residual_norm),
        "n_points": int(result.n_points),
        "n_iterations": int(result.n_iterations),
        "converged": bool(result.converged),
        "flags": list(result.flags),
        "message": result.message,
    }
    extra = dict(result.extra)
    if source is not None:
        extra["source"] = source
    if extra:
        rec["extra"] = extra
    return rec


def record_to_result(rec: dict, line: Optional[int] = None) -> FitResult:
    if rec.get("schema") != RESULTS_SCHEMA:
        raise ParseError(f"not a fit record (schema={rec.get('schema')!r})", line)
    version = rec.get("schema_version")
    if version != RESULTS_SCHEMA_VERSION:
        raise SchemaVersionError(
            f"unsupported results schema_version {version!r}; this reader handles {RESULTS_SCHEMA_VERSION}",
            line,
        )
    try:
        return FitResult(
            model=rec["model"],
            param_names=tuple(rec["param_names"]),
            params=np.array([_decode_float(v) for v in rec["params"]]),
            covariance=np.array([[_decode_float(v) for v in row] for row in rec["covariance"]]).reshape(
                len(rec["params"]), len(rec["params"])
            ),
            residual_norm=_decode_float(rec["residual_norm"]),
            n_iterations=int(rec["n_iterations"]),
            converged=bool(rec["converged"]),
            units=tuple(rec.get("units", ())),
            flags=tuple(rec.get("flags", ())),
            message=rec.get("message", ""),
            sample_id=rec.get("sample_id"),
            n_points=int(rec.get("n_points", 0)),
            extra=dict(rec.get("extra", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed fit record: {exc}", line) from None


def write_results(results: Iterable[FitResult]) -> str:
    """One JSON object per line, keys in a fixed order."""
    return "".join(json.dumps(result_to_record(r), allow_nan=False) + "\n" for r in results)


def read_results(text: str) -> List[FitResult]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
        if not isinstance(rec, dict):
            raise ParseError("record is not a JSON object", lineno)
        out.append(record_to_result(rec, lineno))
    return out
