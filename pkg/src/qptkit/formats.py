"""On-disk formats: count files, chi files and scatter CSVs.

Writers are deterministic so identical inputs give byte-identical files.
Chi entries are written with 17 significant digits, which round-trips
every double exactly.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .metrics import SCATTER_COLUMNS, ScatterTable
from .process import PHYSICAL, UNCONSTRAINED, ProcessMatrix, basis_by_name
from .tomography import ALPHABET, CountSet, NoiseSpec, standard_settings

UNCONVERGED = "unconverged"
KNOWN_FLAGS = (PHYSICAL, UNCONSTRAINED, UNCONVERGED)
LOAD_HERMITIAN_TOL = 1e-8


class FormatError(ValueError):
    """A file does not follow the expected layout; the message names the field."""


def _load_json(text: str, what: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{what}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{what}: top level must be an object")
    return doc


def _require(doc: dict, key: str, what: str):
    if key not in doc:
        raise FormatError(f"{what}: missing field '{key}'")
    return doc[key]


# ------------------------------------------------------------------ counts


def dump_counts(data: CountSet) -> str:
    data.require_complete()
    records = [
        {"input": s.input_label, "analyzer": s.analyzer_label, "counts": int(data.counts[s.key])}
        for s in standard_settings()
    ]
    doc = {
        "dimension": 4,
        "total_pairs": float(data.total_pairs),
        "seed": data.seed,
        "noise": data.noise.to_dict() if data.noise is not None else None,
        "records": records,
    }
    return json.dumps(doc, indent=1) + "\n"


def _check_label(value, field: str) -> str:
    if not isinstance(value, str) or len(value) != 2 or any(ch not in ALPHABET for ch in value):
        raise FormatError(f"{field}: expected two letters from {ALPHABET}, got {value!r}")
    return value


def parse_counts(text: str, require_complete: bool = True) -> CountSet:
    doc = _load_json(text, "count file")
    dim = _require(doc, "dimension", "count file")
    if dim != 4:
        raise FormatError(f"dimension: only 4 is supported, got {dim!r}")
    total = _require(doc, "total_pairs", "count file")
    if isinstance(total, bool) or not isinstance(total, (int, float)) or not total > 0:
        raise FormatError(f"total_pairs: expected a positive number, got {total!r}")
    seed = doc.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise FormatError(f"seed: expected an integer or null, got {seed!r}")
    noise = doc.get("noise")
    if noise is not None:
        if not isinstance(noise, dict):
            raise FormatError("noise: expected an object or null")
        try:
            noise = NoiseSpec.from_dict(noise)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"noise: {exc}") from None
    records = _require(doc, "records", "count file")
    if not isinstance(records, list):
        raise FormatError("records: expected a list")
    counts = {}
    for i, rec in enumerate(records):
        where = f"records[{i}]"
        if not isinstance(rec, dict):
            raise FormatError(f"{where}: expected an object")
        a = _check_label(_require(rec, "input", where), f"{where}.input")
        b = _check_label(_require(rec, "analyzer", where), f"{where}.analyzer")
        c = _require(rec, "counts", where)
        if isinstance(c, bool) or not isinstance(c, int) or c < 0:
            raise FormatError(f"{where}.counts: expected a nonnegative integer, got {c!r}")
        if (a, b) in counts:
            raise FormatError(f"{where}: duplicate setting {a}/{b}")
        counts[(a, b)] = c
    if require_complete and len(counts) != len(standard_settings()):
        raise FormatError(f"records: expected {len(standard_settings())} settings, got {len(counts)}")
    return CountSet(counts, float(total), seed=seed, noise=noise)


# --------------------------------------------------------------------- chi


def _fmt(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("chi entries must be finite")
    if x == 0.0:
        x = 0.0  # drop the sign of negative zero
    return format(x, ".17g")


def _matrix_text(m: np.ndarray) -> str:
    rows = ["    [" + ", ".join(_fmt(v) for v in row) + "]" for row in m]
    return "[\n" + ",\n".join(rows) + "\n  ]"


def dump_chi(chi: ProcessMatrix, extra_flags=()) -> str:
    flags = list(chi.flags) + [f for f in extra_flags if f not in chi.flags]
    return (
        "{\n"
        f'  "dimension": {chi.d},\n'
        f'  "basis": {json.dumps(chi.basis.name)},\n'
        f'  "flags": {json.dumps(flags)},\n'
        f'  "real": {_matrix_text(chi.chi.real)},\n'
        f'  "imag": {_matrix_text(chi.chi.imag)}\n'
        "}\n"
    )


def _square(doc, key, n):
    value = _require(doc, key, "chi file")
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise FormatError(f"{key}: expected a {n}x{n} array of numbers") from None
    if arr.shape != (n, n):
        raise FormatError(f"{key}: expected shape {n}x{n}, got {'x'.join(map(str, arr.shape))}")
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{key}: entries must be finite")
    return arr


def parse_chi(text: str) -> ProcessMatrix:
    doc = _load_json(text, "chi file")
    dim = _require(doc, "dimension", "chi file")
    if dim != 4:
        raise FormatError(f"dimension: only 4 is supported, got {dim!r}")
    name = _require(doc, "basis", "chi file")
    try:
        basis = basis_by_name(name)
    except (TypeError, ValueError):
        raise FormatError(f"basis: unknown basis {name!r}") from None
    flags = _require(doc, "flags", "chi file")
    if not isinstance(flags, list) or any(f not in KNOWN_FLAGS for f in flags):
        raise FormatError(f"flags: expected a list drawn from {list(KNOWN_FLAGS)}, got {flags!r}")
    n = len(basis)
    chi = _square(doc, "real", n) + 1j * _square(doc, "imag", n)
    dev = float(np.max(np.abs(chi - chi.conj().T)))
    if dev > LOAD_HERMITIAN_TOL:
        raise FormatError(f"real/imag: matrix is not Hermitian (deviation {dev:.3g})")
    return ProcessMatrix((chi + chi.conj().T) / 2, basis, flags=tuple(flags))


# ----------------------------------------------------------------- scatter


def _fixed(x: float) -> str:
    s = format(float(x), ".9f")
    return "0.000000000" if s == "-0.000000000" else s


def write_scatter(table: ScatterTable, stream) -> None:
    """CSV with the fixed header and nine digits after the decimal point."""
    stream.write(",".join(SCATTER_COLUMNS) + "\n")
    for row in table.rows:
        stream.write(",".join(_fixed(v) for v in row) + "\n")


def read_scatter(stream) -> np.ndarray:
    header = stream.readline().strip()
    if header != ",".join(SCATTER_COLUMNS):
        raise FormatError(f"scatter header: expected {','.join(SCATTER_COLUMNS)!r}, got {header!r}")
    rows = [list(map(float, line.split(","))) for line in stream if line.strip()]
    return np.array(rows).reshape(-1, len(SCATTER_COLUMNS))
