"""File ingestion: long-form panel CSV and Eurostat bulk-download TSV.

The CSV schema is ``unit,period,outcome[,cov_*...]`` with integer periods
and dot-decimal numbers. The Eurostat reader handles the bulk-download TSV
layout: a comma-separated dimension key ending in ``geo\\TIME_PERIOD`` in
the first column, one tab-separated column per year, numeric cells that may
carry space-separated flag letters, and ``:`` for missing values. Neither
reader touches the network; files are supplied locally.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

CSV_COVARIATE_PREFIX = "cov_"


def file_digest(path) -> str:
    """Hex SHA-256 of a file's bytes, recorded as provenance."""
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{path} is not UTF-8 text: {exc}") from exc


def parse_panel_csv(path) -> list:
    """Parse a long-form panel CSV into build_panel records.

    Covariate columns are auto-detected by the ``cov_`` prefix; the prefix
    is stripped from the covariate name. Errors carry the offending line
    number.

    Returns
    -------
    list of (unit, period, outcome, {covariate: value})
    """
    text = _read_text(path)
    lines = text.splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    for required in ("unit", "period", "outcome"):
        if required not in header:
            raise DataError(f"{path}: header is missing the {required!r} column")
    for col in header:
        if col not in ("unit", "period", "outcome") and not col.startswith(CSV_COVARIATE_PREFIX):
            raise DataError(
                f"{path}: unexpected column {col!r} (covariates need the "
                f"{CSV_COVARIATE_PREFIX!r} prefix)"
            )
    idx = {col: i for i, col in enumerate(header)}
    cov_cols = [c for c in header if c.startswith(CSV_COVARIATE_PREFIX)]

    records = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != len(header):
            raise DataError(
                f"{path}:{lineno}: expected {len(header)} fields, found {len(fields)}"
            )
        unit = fields[idx["unit"]]
        if not unit:
            raise DataError(f"{path}:{lineno}: empty unit label")
        try:
            period = int(fields[idx["period"]])
        except ValueError:
            raise DataError(f"{path}:{lineno}: period {fields[idx['period']]!r} is not an integer") from None
        try:
            outcome = float(fields[idx["outcome"]])
        except ValueError:
            raise DataError(f"{path}:{lineno}: outcome {fields[idx['outcome']]!r} is not numeric") from None
        if (unit, period) in seen:
            raise DataError(f"{path}:{lineno}: duplicate cell for ({unit!r}, {period})")
        seen.add((unit, period))
        covs = {}
        for col in cov_cols:
            raw = fields[idx[col]]
            try:
                covs[col[len(CSV_COVARIATE_PREFIX):]] = float(raw)
            except ValueError:
                raise DataError(f"{path}:{lineno}: covariate {col!r} value {raw!r} is not numeric") from None
        records.append((unit, period, outcome, covs))
    if not records:
        raise DataError(f"{path}: no data rows")
    return records


def panel_to_csv(panel) -> str:
    """Emit a panel back to the CSV schema (round-trips through the parser)."""
    cov_names = sorted(panel.covariates)
    header = ["unit", "period", "outcome"] + [CSV_COVARIATE_PREFIX + c for c in cov_names]
    lines = [",".join(header)]
    for i, unit in enumerate(panel.units):
        for j, period in enumerate(panel.periods):
            row = [unit, str(period), repr(float(panel.outcomes[i, j]))]
            row += [repr(float(panel.covariates[c][i, j])) for c in cov_names]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EurostatFilter:
    """Row selection and value handling for a Eurostat bulk TSV.

    Attributes
    ----------
    dimensions : dict
        Required dimension values, e.g. ``{"unit": "THS_PAS", "freq": "A"}``;
        rows not matching every entry are skipped.
    years : (int, int) or None
        Inclusive study window; countries missing any year in it are dropped
        with a warning (the panel must stay balanced).
    scale : float
        Multiplier applied to raw values (e.g. 0.001 for thousands to
        millions).
    min_value : float or None
        Keep only countries whose scaled value exceeds this in every window
        year (donor-pool selection rule).
    """

    dimensions: dict = field(default_factory=dict)
    years: tuple | None = None
    scale: float = 1.0
    min_value: float | None = None


@dataclass(frozen=True)
class EurostatResult:
    """Parsed records plus what was filtered out along the way."""

    records: list
    dropped: list  # (geo, reason)
    flags: dict  # (geo, year) -> flag string


def parse_eurostat_tsv(path, filt: EurostatFilter) -> EurostatResult:
    """Parse a Eurostat bulk-download TSV into panel records.

    Cells like ``"12345.0 p"`` yield 12345.0 with flag ``"p"`` recorded;
    ``":"`` (optionally with flags) is missing. A malformed dimension key is
    an error with its line number.
    """
    text = _read_text(path)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    head = lines[0].split("\t")
    dim_header = head[0]
    if "\\TIME_PERIOD" not in dim_header:
        raise DataError(f"{path}:1: first column {dim_header!r} is not a Eurostat dimension key")
    dim_names = [d.strip() for d in dim_header.split("\\")[0].split(",")]
    try:
        years = [int(col.strip()) for col in head[1:]]
    except ValueError as exc:
        raise DataError(f"{path}:1: non-integer year column: {exc}") from None
    for name in filt.dimensions:
        if name not in dim_names:
            raise DataError(f"{path}: filter dimension {name!r} not in header {dim_names}")
    geo_pos = dim_names.index("geo") if "geo" in dim_names else len(dim_names) - 1

    values: dict = {}
    flags: dict = {}
    for lineno, line in enumerate(lines[1:], start=2):
        cols = line.split("\t")
        key_parts = [p.strip() for p in cols[0].split(",")]
        if len(key_parts) != len(dim_names):
            raise DataError(
                f"{path}:{lineno}: dimension key {cols[0]!r} has {len(key_parts)} "
                f"parts, expected {len(dim_names)}"
            )
        row_dims = dict(zip(dim_names, key_parts))
        if any(row_dims.get(k) != v for k, v in filt.dimensions.items()):
            continue
        geo = key_parts[geo_pos]
        if len(cols) - 1 != len(years):
            raise DataError(f"{path}:{lineno}: expected {len(years)} value cells, found {len(cols) - 1}")
        for year, cell in zip(years, cols[1:]):
            tokens = cell.strip().split()
            if not tokens or tokens[0] == ":":
                flag = " ".join(tokens[1:])
                if flag:
                    flags[(geo, year)] = flag
                continue  # missing value
            try:
                value = float(tokens[0])
            except ValueError:
                raise DataError(f"{path}:{lineno}: cell {cell!r} for year {year} is not numeric") from None
            if len(tokens) > 1:
                flags[(geo, year)] = " ".join(tokens[1:])
            values[(geo, year)] = value * filt.scale

    window = sorted(years) if filt.years is None else list(range(filt.years[0], filt.years[1] + 1))
    geos = sorted({g for g, _ in values})
    dropped = []
    records = []
    for geo in geos:
        missing = [y for y in window if (geo, y) not in values]
        if missing:
            dropped.append((geo, f"missing years {missing} in window {window[0]}-{window[-1]}"))
            continue
        series = [values[(geo, y)] for y in window]
        if filt.min_value is not None and min(series) <= filt.min_value:
            dropped.append((geo, f"below the {filt.min_value:g} per-year threshold"))
            continue
        records.extend((geo, y, values[(geo, y)], {}) for y in window)
    return EurostatResult(records=records, dropped=dropped, flags=flags)
