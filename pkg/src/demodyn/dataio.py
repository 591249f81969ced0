"""CSV ingestion and emission for ground, aerial, covariate and unit data.

All writers format floats with six significant digits and fixed column
orders, so identical runs produce byte-identical files and every emitted
file re-parses under the loaders here.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .rates import CovariateRecord

GROUND_HEADER = ["year", "month", "new", "quarter", "halfyear", "adult_f", "adult_m"]
AERIAL_HEADER = ["date", "estimate", "se"]
COVARIATE_HEADER = ["year", "month", "rainfall_mm", "tmin_c", "tmax_c"]
UNITS_HEADER = ["unit_id", "area_km2", "count"]

WET_MONTHS = (11, 12, 1, 2, 3, 4, 5, 6)
EARLY_WET_MONTHS = (11, 12, 1, 2)
DRY_MONTHS = (7, 8, 9, 10)


def fmt_num(x) -> str:
    """Render a number with 6 significant digits (integers stay integral)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    f = float(x)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return format(f, ".6g")


@dataclass(frozen=True)
class GroundRecord:
    year: int
    month: int
    new: int
    quarter: int
    halfyear: int
    adult_f: int
    adult_m: int

    @property
    def total(self) -> int:
        return self.new + self.quarter + self.halfyear + self.adult_f + self.adult_m


class GroundSeries:
    """Monthly age- and sex-classified ground counts, strictly increasing in time."""

    def __init__(self, records):
        records = list(records)
        keys = [(r.year, r.month) for r in records]
        if any(k2 <= k1 for k1, k2 in zip(keys, keys[1:])):
            raise ValueError("ground records must be strictly increasing in (year, month)")
        for r in records:
            if min(r.new, r.quarter, r.halfyear, r.adult_f, r.adult_m) < 0:
                raise ValueError("ground counts must be non-negative")
            if not 1 <= r.month <= 12:
                raise ValueError(f"month out of range: {r.month}")
        self.records = records

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def totals_by_month(self) -> dict:
        return {(r.year, r.month): r.total for r in self.records}

    def observation_array(self, start: tuple, n_months: int) -> np.ndarray:
        """(5, n_months+1) count array; -1 marks unobserved months.

        ``start`` is the (year, month) of t = 1.
        """
        obs = np.full((5, n_months + 1), -1, dtype=np.int64)
        for r in self.records:
            t = month_offset(start, (r.year, r.month)) + 1
            if 1 <= t <= n_months:
                obs[:, t] = (r.new, r.quarter, r.halfyear, r.adult_f, r.adult_m)
        return obs


@dataclass(frozen=True)
class AerialRecord:
    year: int
    month: int
    estimate: float
    se: float


class AerialSeries:
    """Sparse aerial survey estimates of the ecosystem-wide total."""

    def __init__(self, records):
        records = list(records)
        keys = [(r.year, r.month) for r in records]
        if any(k2 <= k1 for k1, k2 in zip(keys, keys[1:])):
            raise ValueError("aerial records must be strictly increasing in (year, month)")
        for r in records:
            if r.estimate < 0:
                raise ValueError("aerial estimates must be non-negative")
        self.records = records

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def survey_arrays(self, start: tuple, n_months: int) -> tuple:
        """Months (1-based) and rounded totals for surveys inside the window."""
        months, totals = [], []
        for r in self.records:
            t = month_offset(start, (r.year, r.month)) + 1
            if 1 <= t <= n_months:
                months.append(t)
                totals.append(int(round(r.estimate)))
        return np.array(months, dtype=np.int64), np.array(totals, dtype=np.int64)


def month_offset(start: tuple, when: tuple) -> int:
    """Whole months between two (year, month) pairs."""
    return (when[0] - start[0]) * 12 + (when[1] - start[1])


def add_months(start: tuple, k: int) -> tuple:
    m0 = start[0] * 12 + (start[1] - 1) + k
    return m0 // 12, m0 % 12 + 1


# ---------------------------------------------------------------------------
# loaders
# ---------------------------------------------------------------------------

def _read_rows(path, header):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        if [c.strip() for c in first] != header:
            raise ValueError(f"{path}: expected header {','.join(header)}, "
                             f"got {','.join(first)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} "
                                 f"fields, got {len(row)}")
            rows.append((lineno, row))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


def _parse(path, lineno, raw, kind, name):
    try:
        return kind(raw)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: bad value for {name}: {raw!r}") from None


def load_ground(path) -> GroundSeries:
    records = []
    for lineno, row in _read_rows(path, GROUND_HEADER):
        vals = [_parse(path, lineno, c, int, n) for c, n in zip(row, GROUND_HEADER)]
        records.append(GroundRecord(*vals))
    return GroundSeries(records)


def load_aerial(path) -> AerialSeries:
    records = []
    for lineno, row in _read_rows(path, AERIAL_HEADER):
        date = row[0].strip()
        parts = date.split("-")
        if len(parts) not in (2, 3):
            raise ValueError(f"{path}:{lineno}: date must be YYYY-MM or YYYY-MM-DD, got {date!r}")
        year = _parse(path, lineno, parts[0], int, "year")
        month = _parse(path, lineno, parts[1], int, "month")
        if not 1 <= month <= 12:
            raise ValueError(f"{path}:{lineno}: month out of range in {date!r}")
        est = _parse(path, lineno, row[1], float, "estimate")
        se = _parse(path, lineno, row[2], float, "se")
        records.append(AerialRecord(year, month, est, se))
    return AerialSeries(records)


def load_units(path) -> tuple:
    """Units CSV -> (ids, areas, counts) arrays."""
    ids, areas, counts = [], [], []
    for lineno, row in _read_rows(path, UNITS_HEADER):
        ids.append(row[0].strip())
        areas.append(_parse(path, lineno, row[1], float, "area_km2"))
        counts.append(_parse(path, lineno, row[2], float, "count"))
    return ids, np.array(areas), np.array(counts)


def load_covariates(path) -> list:
    """Raw weather CSV -> derived CovariateRecord list.

    Rows must be consecutive months.  A month is emitted only once it has
    eleven months of lag history and a fully observed preceding calendar
    year (for the seasonal totals); earlier months are dropped with a
    warning.
    """
    rows = []
    for lineno, row in _read_rows(path, COVARIATE_HEADER):
        year = _parse(path, lineno, row[0], int, "year")
        month = _parse(path, lineno, row[1], int, "month")
        rain = _parse(path, lineno, row[2], float, "rainfall_mm")
        tmin = _parse(path, lineno, row[3], float, "tmin_c")
        tmax = _parse(path, lineno, row[4], float, "tmax_c")
        if not 1 <= month <= 12:
            raise ValueError(f"{path}:{lineno}: month out of range: {month}")
        if rain < 0:
            raise ValueError(f"{path}:{lineno}: negative rainfall: {rain}")
        rows.append((year, month, rain, tmin, tmax))
    for (y1, m1, *_), (y2, m2, *_) in zip(rows, rows[1:]):
        if month_offset((y1, m1), (y2, m2)) != 1:
            raise ValueError(f"{path}: covariate months must be consecutive; "
                             f"gap after {y1}-{m1:02d}")
    return derive_covariates(rows, source=str(path))


def derive_covariates(rows, source: str = "covariates") -> list:
    """Build CovariateRecord objects from consecutive (year, month, rain, tmin, tmax) rows."""
    years_seen = {}
    for y, m, rain, _tmin, _tmax in rows:
        years_seen.setdefault(y, {})[m] = rain

    def season_total(year: int, months) -> float | None:
        vals = years_seen.get(year)
        if vals is None or any(m not in vals for m in months):
            return None
        return float(sum(vals[m] for m in months))

    out = []
    dropped = 0
    for i, (y, m, _rain, tmin, tmax) in enumerate(rows):
        wet1 = season_total(y - 1, WET_MONTHS)
        early1 = season_total(y - 1, EARLY_WET_MONTHS)
        dry1 = season_total(y - 1, DRY_MONTHS)
        if i < 11 or wet1 is None or early1 is None or dry1 is None:
            dropped += 1
            continue
        lagrain = tuple(rows[i - l][2] for l in range(12))
        lagmin = tuple(rows[i - l][3] for l in range(1, 12))
        lagmax = tuple(rows[i - l][4] for l in range(1, 12))
        out.append(CovariateRecord(
            year=y, month=m,
            rain_7_11=float(np.mean(lagrain[6:11])),
            mintemp=tmin, maxtemp=tmax,
            lagrain=lagrain, lagmin=lagmin, lagmax=lagmax,
            wet1=wet1, earlywet1=early1, dry1=dry1,
            mavrain_3_4=float(np.mean(lagrain[3:5])),
        ))
    if dropped:
        warnings.warn(f"{source}: dropped {dropped} early month(s) lacking lag "
                      "history or a complete preceding calendar year")
    if not out:
        raise ValueError(f"{source}: no month has enough history to derive covariates")
    return out


def attach_population_covariates(covs, totals_by_month: dict) -> list:
    """Fill the lagged-population covariates from a (year, month) -> total map.

    Months whose lag falls outside the map borrow the chronologically
    nearest available total, keeping the density signal smooth at the edges.
    """
    if not totals_by_month:
        return list(covs)
    keys = sorted(totals_by_month, key=lambda k: (k[0], k[1]))

    def lookup(when):
        if when in totals_by_month:
            return float(totals_by_month[when])
        if when < keys[0]:
            return float(totals_by_month[keys[0]])
        if when > keys[-1]:
            return float(totals_by_month[keys[-1]])
        best = min(keys, key=lambda k: abs(month_offset(k, when)))
        return float(totals_by_month[best])

    out = []
    for cov in covs:
        when = (cov.year, cov.month)
        out.append(replace(cov,
                           npop_lag7=lookup(add_months(when, -7)),
                           apop_lag1=lookup(add_months(when, -1))))
    return out


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_num(v) if isinstance(v, (int, float, np.integer, np.floating))
                             else v for v in row])


def write_ground(path, records) -> None:
    rows = [(r.year, r.month, r.new, r.quarter, r.halfyear, r.adult_f, r.adult_m)
            if isinstance(r, GroundRecord) else tuple(r) for r in records]
    write_csv(path, GROUND_HEADER, rows)


def write_aerial(path, records) -> None:
    rows = [(f"{r.year:04d}-{r.month:02d}", r.estimate, r.se) for r in records]
    write_csv(path, AERIAL_HEADER, rows)
