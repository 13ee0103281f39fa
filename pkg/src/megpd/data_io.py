"""Station precipitation ingestion and construction of bivariate fall-winter datasets.

Two input layouts are read:

* ECA&D daily precipitation (``RR_STAID*.txt``): free-text header lines, then a
  column header starting with ``STAID`` followed by comma-separated rows
  ``STAID, SOUID, DATE, RR, Q_RR``.  ``DATE`` is ``YYYYMMDD``, ``RR`` is in
  units of 0.1 mm with ``-9999`` marking a missing value, and ``Q_RR`` is 0
  (valid), 1 (suspect) or 9 (missing).
* plain CSV with rows ``date,value_mm`` (ISO dates, optional header line; an
  empty field or ``NA`` marks a missing value).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import DataError, ParseError

ECAD_MISSING = -9999
ECAD_SUSPECT = 1
ECAD_MISSING_FLAG = 9
ECAD_UNIT_MM = 0.1
IMPLAUSIBLE_MM = 500.0
IMPLAUSIBLE_FRACTION = 0.01
FALL_WINTER = (10, 11, 12, 1, 2)


class UnitWarning(UserWarning):
    """Values look too large to be daily totals in millimetres."""


@dataclass
class StationSeries:
    station_id: str
    dates: np.ndarray
    values: np.ndarray
    quality_flags: np.ndarray | None = None
    source: str | None = None

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.values = np.asarray(self.values, dtype=float)
        if self.dates.shape != self.values.shape:
            raise DataError("dates and values must have equal length")
        if np.any(np.diff(self.dates.astype(np.int64)) <= 0):
            raise DataError(f"station {self.station_id}: dates must be strictly increasing")
        if np.any(self.values < 0):
            raise DataError(f"station {self.station_id}: negative precipitation values")

    def __len__(self):
        return self.values.shape[0]

    def positive_count(self, months=FALL_WINTER, years=(1999, 2024)):
        """Number of strictly positive days inside the season window."""
        keep = _window_mask(self.dates, months, years) & (self.values > 0)
        return int(np.count_nonzero(keep))


def _parse_date(text, lineno, compact):
    text = text.strip()
    try:
        if compact:
            if len(text) != 8 or not text.isdigit():
                raise ValueError(f"expected YYYYMMDD, got {text!r}")
            text = f"{text[:4]}-{text[4:6]}-{text[6:]}"
        return np.datetime64(text, "D")
    except ValueError as exc:
        raise ParseError(f"bad date {text!r}: {exc}", line=lineno) from None


def _check_order(dates, lines, station):
    d = np.asarray(dates, dtype="datetime64[D]")
    bad = np.flatnonzero(np.diff(d.astype(np.int64)) <= 0)
    if bad.size:
        i = bad[0] + 1
        raise ParseError(f"station {station}: date {d[i]} does not follow {d[i - 1]}", line=lines[i])
    return d


def _unit_check(values, path):
    v = values[np.isfinite(values)]
    if v.size and np.mean(v > IMPLAUSIBLE_MM) > IMPLAUSIBLE_FRACTION:
        warnings.warn(f"{path}: more than {IMPLAUSIBLE_FRACTION:.0%} of values exceed {IMPLAUSIBLE_MM:g} mm; "
                      "check the units", UnitWarning, stacklevel=3)


def _read_ecad(path, drop_suspect):
    lines = Path(path).read_text(errors="replace").splitlines()
    start = None
    for i, line in enumerate(lines):
        if line.strip().upper().startswith("STAID"):
            start = i
            break
    if start is None:
        raise ParseError("no 'STAID' column header found", line=len(lines) or 1)
    header = [h.strip().upper() for h in lines[start].split(",")]
    try:
        c_id, c_date, c_rr, c_q = (header.index(k) for k in ("STAID", "DATE", "RR", "Q_RR"))
    except ValueError:
        raise ParseError(f"column header {header} lacks STAID, DATE, RR or Q_RR", line=start + 1) from None
    ids, dates, values, flags, linenos = set(), [], [], [], []
    for i in range(start + 1, len(lines)):
        lineno = i + 1
        if not lines[i].strip():
            continue
        fields = [f.strip() for f in lines[i].split(",")]
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", line=lineno)
        try:
            rr = int(fields[c_rr])
            q = int(fields[c_q])
        except ValueError:
            raise ParseError(f"non-integer RR or Q_RR in {lines[i]!r}", line=lineno) from None
        if rr < 0 and rr != ECAD_MISSING:
            raise ParseError(f"negative precipitation {rr}", line=lineno)
        ids.add(fields[c_id])
        dates.append(_parse_date(fields[c_date], lineno, compact=True))
        missing = rr == ECAD_MISSING or q == ECAD_MISSING_FLAG or (drop_suspect and q == ECAD_SUSPECT)
        values.append(np.nan if missing else rr * ECAD_UNIT_MM)
        flags.append(q)
        linenos.append(lineno)
    if len(ids) > 1:
        raise ParseError(f"file mixes stations {sorted(ids)}", line=start + 2)
    station = ids.pop() if ids else Path(path).stem
    d = _check_order(dates, linenos, station)
    return StationSeries(station, d, np.array(values), np.array(flags, dtype=int), str(path))


def _read_plain(path, station_id):
    dates, values, linenos = [], [], []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != 2:
                raise ParseError(f"expected 2 fields 'date,value_mm', got {len(fields)}", line=lineno)
            if not dates and not fields[0][:1].isdigit():
                continue  # header line
            d = _parse_date(fields[0], lineno, compact=False)
            if fields[1] == "" or fields[1].upper() in ("NA", "NAN"):
                v = np.nan
            else:
                try:
                    v = float(fields[1])
                except ValueError:
                    raise ParseError(f"bad value {fields[1]!r}", line=lineno) from None
                if v < 0:
                    raise ParseError(f"negative precipitation {v}", line=lineno)
            dates.append(d)
            values.append(v)
            linenos.append(lineno)
    station = station_id or Path(path).stem
    d = _check_order(dates, linenos, station)
    return StationSeries(station, d, np.array(values, dtype=float), None, str(path))


def load_station_csv(path, format="plain", drop_suspect=True, station_id=None):
    """Read one station's daily precipitation series in mm.

    ``format`` is ``"eca_d"`` or ``"plain"``.  Missing values become NaN;
    suspect ECA&D rows are treated as missing unless ``drop_suspect=False``.
    Raises :class:`ParseError` with the offending line number.
    """
    if format == "eca_d":
        series = _read_ecad(path, drop_suspect)
        if station_id is not None:
            series.station_id = station_id
    elif format == "plain":
        series = _read_plain(path, station_id)
    else:
        raise ValueError(f"format must be 'eca_d' or 'plain', got {format!r}")
    _unit_check(series.values, path)
    return series


def season_year(dates, first_month=10):
    """Calendar year of the season's first month: Jan/Feb count toward the previous autumn."""
    d = np.asarray(dates, dtype="datetime64[D]")
    year = d.astype("datetime64[Y]").astype(int) + 1970
    month = d.astype("datetime64[M]").astype(int) % 12 + 1
    return np.where(month >= first_month, year, year - 1), month


def _window_mask(dates, months, years):
    months = tuple(int(m) for m in months)
    # a window wrapping the new year is attributed to the year of its first month
    sy, month = season_year(dates, months[0] if _wraps(months) else 1)
    return np.isin(month, months) & (sy >= years[0]) & (sy <= years[1])


def _wraps(months):
    return any(b < a for a, b in zip(months, months[1:]))


def make_pair_dataset(a, b, months=FALL_WINTER, years=(1999, 2024), scale=True):
    """Join two stations on date and keep days positive at both inside the season window.

    ``years`` bounds the season year (the year of the window's first month; for
    October-February, January and February belong to the preceding October).
    With ``scale=True`` each column is divided by its sample standard deviation
    computed on the retained rows.
    """
    common, ia, ib = np.intersect1d(a.dates, b.dates, assume_unique=True, return_indices=True)
    va, vb = a.values[ia], b.values[ib]
    in_window = _window_mask(common, months, years)
    keep = in_window & np.isfinite(va) & np.isfinite(vb) & (va > 0) & (vb > 0)
    if not np.any(keep):
        raise DataError(f"no common positive days for {a.station_id} and {b.station_id} in the window")
    raw = np.column_stack([va[keep], vb[keep]])
    factors = raw.std(axis=0, ddof=1) if scale else np.ones(2)
    if np.any(~(factors > 0)):
        raise DataError("a column has zero spread; cannot scale")
    prov = {
        "stations": [a.station_id, b.station_id],
        "sources": [a.source, b.source],
        "months": list(months),
        "season_years": list(years),
        "scaled": bool(scale),
        "common_days": int(common.size),
        "window_days": int(np.count_nonzero(in_window)),
        "retained": int(np.count_nonzero(keep)),
        "positive_days": [a.positive_count(months, years), b.positive_count(months, years)],
        "first_date": str(common[keep][0]),
        "last_date": str(common[keep][-1]),
    }
    return Dataset(raw / factors, columns=("y1", "y2"), scaling_factors=factors, provenance=prov, raw=raw)
