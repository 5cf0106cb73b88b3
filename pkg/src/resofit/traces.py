"""Reading and writing of reflection traces, sweep manifests and results.

Supported inputs are one-port Touchstone v1 files (``.s1p``) and a plain
CSV layout with ``freq_hz,re,im`` columns.  Results are written as JSON or
CSV with a fixed field order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Iterable

import jsonschema
import numpy as np

from .errors import InputFileError, ManifestError, ParseError

FREQ_UNITS = {"HZ": 0, "KHZ": 3, "MHZ": 6, "GHZ": 9}
SAMPLE_FORMATS = ("RI", "MA", "DB")


class TraceReorderedWarning(UserWarning):
    """Rows of a CSV trace were not in ascending frequency order."""


@dataclass(frozen=True, eq=False)
class ComplexTrace:
    """Complex reflection samples on a strictly increasing frequency axis."""

    frequencies_hz: np.ndarray
    samples: np.ndarray
    reordered: bool = False

    def __post_init__(self):
        f = np.array(self.frequencies_hz, dtype=float)
        s = np.array(self.samples, dtype=complex)
        if f.ndim != 1 or s.ndim != 1:
            raise ValueError("frequencies and samples must be one-dimensional")
        if f.shape != s.shape:
            raise ValueError(
                f"length mismatch: {f.size} frequencies, {s.size} samples")
        if f.size < 3:
            raise ValueError(f"a trace needs at least 3 points, got {f.size}")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(s))):
            raise ValueError("trace contains non-finite values")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        f.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "frequencies_hz", f)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.frequencies_hz.size

    def __eq__(self, other):
        if not isinstance(other, ComplexTrace):
            return NotImplemented
        return (np.array_equal(self.frequencies_hz, other.frequencies_hz)
                and np.array_equal(self.samples, other.samples))

    def with_samples(self, samples) -> "ComplexTrace":
        return ComplexTrace(self.frequencies_hz, samples)


@dataclass(frozen=True)
class SweepRecord:
    """One measured trace with the acquisition settings it was taken at."""

    trace: ComplexTrace
    source_power_dbm: float
    line_attenuation_db: float
    temperature_k: float
    label: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.line_attenuation_db >= 0:
            raise ValueError(
                f"negative attenuation: {self.line_attenuation_db} dB")
        if not self.temperature_k > 0:
            raise ValueError(
                f"temperature must be positive, got {self.temperature_k} K")


# ---------------------------------------------------------------------------
# Touchstone
# ---------------------------------------------------------------------------

def _parse_option_line(tokens, lineno):
    """Decode the tokens after ``#``; Touchstone v1 defaults fill the gaps."""
    unit, fmt, resistance = "GHZ", None, 50.0
    it = iter(tokens)
    for raw in it:
        tok = raw.upper()
        if tok in FREQ_UNITS:
            unit = tok
        elif tok in SAMPLE_FORMATS:
            if fmt is not None:
                raise ParseError("format given twice in option line", lineno)
            fmt = tok
        elif tok == "S":
            continue
        elif tok == "R":
            value = next(it, None)
            try:
                resistance = float(value)
            except (TypeError, ValueError):
                raise ParseError(
                    f"bad reference resistance {value!r}", lineno) from None
        elif tok in ("Y", "Z", "H", "G"):
            raise ParseError(f"unsupported parameter type {raw!r}", lineno)
        else:
            raise ParseError(f"unsupported format token {raw!r}", lineno)
    return unit, fmt or "MA", resistance


def _scaled_float(token, exponent):
    """``float(token) * 10**exponent`` rounded once, straight from the decimal text."""
    mantissa, sep, exp = token.lower().partition("e")
    return float(f"{mantissa}e{int(exp) + exponent if sep else exponent}")


def _decode(fmt, a, b):
    """Complex samples from the two value columns (arrays)."""
    if fmt == "RI":
        return a + 1j * b
    ang = np.radians(b)
    mag = a if fmt == "MA" else 10.0 ** (a / 20.0)
    return mag * np.cos(ang) + 1j * (mag * np.sin(ang))


def _frequency_column(tokens, exponent):
    if exponent == 0:
        return np.array(tokens, dtype=float)
    suffix = f"e{exponent}"
    return np.array([t + suffix if "e" not in t and "E" not in t
                     else _scaled_float(t, exponent) for t in tokens], dtype=float)


def parse_touchstone(text: str) -> ComplexTrace:
    """Parse a one-port Touchstone v1 document.

    Raises:
        ParseError: on a missing or repeated option line, an unsupported
            format, a row with the wrong number of fields, or a frequency
            axis that is not strictly increasing. The message carries the
            offending line number.
    """
    option = None
    rows = []
    linenos = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        fields = raw.split()
        if not fields:
            continue
        if "!" in raw:
            fields = raw.split("!", 1)[0].split()
            if not fields:
                continue
        if fields[0][0] == "#":
            line = " ".join(fields)
            if option is not None:
                raise ParseError("duplicate option line", lineno)
            option = _parse_option_line(line[1:].split(), lineno)
            continue
        if option is None:
            raise ParseError("data row before option line", lineno)
        if len(fields) != 3:
            raise ParseError(
                f"expected 3 fields in a one-port data row, got {len(fields)}",
                lineno)
        rows.append(fields)
        linenos.append(lineno)
    if option is None:
        raise ParseError("missing option line ('# <unit> S <format> R <ohms>')")
    unit, fmt, _ = option
    cols = list(zip(*rows)) or [(), (), ()]
    try:
        f_hz = _frequency_column(cols[0], FREQ_UNITS[unit])
        a = np.array(cols[1], dtype=float)
        b = np.array(cols[2], dtype=float)
    except ValueError:
        for fields, lineno in zip(rows, linenos):
            try:
                [float(v) for v in fields]
            except ValueError:
                raise ParseError(f"non-numeric field in row {' '.join(fields)!r}",
                                 lineno) from None
        raise
    bad = np.nonzero(~(np.diff(f_hz) > 0))[0]
    if bad.size:
        i = int(bad[0]) + 1
        raise ParseError(
            f"frequency {rows[i][0]} does not increase on the previous row", linenos[i])
    try:
        return ComplexTrace(f_hz, _decode(fmt, a, b))
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def _format_frequency(f_hz, unit):
    d = Decimal(repr(float(f_hz))).scaleb(-FREQ_UNITS[unit]).normalize()
    return format(d, "f")


def _format_sample(z, fmt):
    # MA/DB values go through trig and logs on re-reading, so they are
    # printed with enough slack that a re-serialisation is stable.
    if fmt == "RI":
        return repr(float(z.real)), repr(float(z.imag))
    mag = abs(z)
    ang = math.degrees(math.atan2(z.imag, z.real))
    if fmt == "MA":
        return f"{mag:.14g}", f"{ang:.14g}"
    db = 20.0 * math.log10(mag) if mag > 0 else -999.0
    return f"{db:.12f}", f"{ang:.14g}"


def write_touchstone(trace: ComplexTrace, unit="GHZ", fmt="RI",
                     resistance=50.0, comments: Iterable[str] = ()) -> str:
    """Serialise a trace as a one-port Touchstone v1 document."""
    unit, fmt = unit.upper(), fmt.upper()
    if unit not in FREQ_UNITS:
        raise ValueError(f"unknown frequency unit {unit!r}")
    if fmt not in SAMPLE_FORMATS:
        raise ValueError(f"unsupported format {fmt!r}")
    lines = [f"! {c}" for c in comments]
    lines.append(f"# {unit} S {fmt} R {resistance:g}")
    for f, z in zip(trace.frequencies_hz, trace.samples):
        a, b = _format_sample(complex(z), fmt)
        lines.append(f"{_format_frequency(f, unit)} {a} {b}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def parse_csv(text: str) -> ComplexTrace:
    """Parse a ``freq_hz,re,im`` CSV trace.

    Columns may appear in any order and header names are matched
    case-insensitively. Rows out of frequency order are sorted and the
    returned trace has ``reordered`` set.
    """
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if any(cell.strip() for cell in row)]
    if not rows:
        raise ParseError("empty CSV document")
    header = [h.strip().lower() for h in rows[0]]
    idx = {}
    for name in ("freq_hz", "re", "im"):
        if name not in header:
            raise ParseError(f"missing required column {name!r}", 1)
        idx[name] = header.index(name)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            data.append(tuple(float(row[idx[k]]) for k in ("freq_hz", "re", "im")))
        except IndexError:
            raise ParseError("row has too few cells", lineno) from None
        except ValueError:
            raise ParseError(f"non-numeric cell in row {row!r}", lineno) from None
    arr = np.array(data, dtype=float).reshape(-1, 3)
    order = np.argsort(arr[:, 0], kind="stable")
    reordered = bool(np.any(order != np.arange(order.size)))
    arr = arr[order]
    dup = np.nonzero(np.diff(arr[:, 0]) == 0)[0]
    if dup.size:
        raise ParseError(f"duplicate frequency {float(arr[dup[0], 0])!r} Hz")
    if reordered:
        warnings.warn("CSV rows were sorted into ascending frequency",
                      TraceReorderedWarning, stacklevel=2)
    try:
        return ComplexTrace(arr[:, 0], arr[:, 1] + 1j * arr[:, 2], reordered)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def write_csv_trace(trace: ComplexTrace) -> str:
    lines = ["freq_hz,re,im"]
    for f, z in zip(trace.frequencies_hz.tolist(), trace.samples.tolist()):
        lines.append(f"{f!r},{z.real!r},{z.imag!r}")
    return "\n".join(lines) + "\n"


PARSERS = {"touchstone": parse_touchstone, "csv": parse_csv}


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

MANIFEST_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["file", "format", "source_power_dbm",
                     "line_attenuation_db", "temperature_k", "label"],
        "properties": {
            "file": {"type": "string", "minLength": 1},
            "format": {"enum": sorted(PARSERS)},
            "source_power_dbm": {"type": "number"},
            "line_attenuation_db": {"type": "number"},
            "temperature_k": {"type": "number", "exclusiveMinimum": 0},
            "label": {"type": "string"},
        },
    },
}


def load_manifest(document: str, base_dir: str | Path = ".") -> list[SweepRecord]:
    """Load every trace named in a JSON sweep manifest, in manifest order.

    Relative file paths resolve against ``base_dir``. Unknown keys (IF
    bandwidth, averaging, ...) are kept in ``SweepRecord.extra``.
    """
    try:
        entries = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(entries, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ManifestError(f"schema violation at {where}: {exc.message}") from None

    records = []
    for i, entry in enumerate(entries):
        if entry["line_attenuation_db"] < 0:
            raise ManifestError(
                f"entry {i}: negative attenuation "
                f"({entry['line_attenuation_db']} dB)")
        path = Path(base_dir) / entry["file"]
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise InputFileError(
                f"manifest entry {i}: cannot read {path}: {exc.strerror}") from None
        try:
            trace = PARSERS[entry["format"]](text)
        except ParseError as exc:
            raise ParseError(f"{path}: {exc}") from None
        known = MANIFEST_SCHEMA["items"]["properties"]
        records.append(SweepRecord(
            trace=trace,
            source_power_dbm=float(entry["source_power_dbm"]),
            line_attenuation_db=float(entry["line_attenuation_db"]),
            temperature_k=float(entry["temperature_k"]),
            label=entry["label"],
            extra={k: v for k, v in entry.items() if k not in known},
        ))
    return records


# ---------------------------------------------------------------------------
# Result emission
# ---------------------------------------------------------------------------

def _as_row(record) -> dict[str, Any]:
    if dataclasses.is_dataclass(record):
        return {f.name: getattr(record, f.name) for f in dataclasses.fields(record)
                if f.metadata.get("emit", True)}
    if isinstance(record, dict):
        return dict(record)
    raise TypeError(f"cannot emit {type(record).__name__}")


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if dataclasses.is_dataclass(value):
        return {k: _jsonable(v) for k, v in _as_row(value).items()}
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _csv_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def emit_results(results, format: str = "json") -> str:
    """Render one result record, or a sequence of them, as JSON or CSV.

    Field order follows the record definition. Floats are written with
    ``repr`` so every value re-parses to the identical double.
    """
    many = isinstance(results, (list, tuple))
    if format == "json":
        payload = [_jsonable(r) for r in results] if many else _jsonable(results)
        return json.dumps(payload, indent=2) + "\n"
    if format == "csv":
        rows = [_as_row(r) for r in (results if many else [results])]
        if not rows:
            return ""
        header = list(rows[0])
        lines = [",".join(header)]
        lines += [",".join(_csv_cell(row[k]) for k in header) for row in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown output format {format!r}")


def parse_results_csv(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))

