"""Observation tables and CSV ingestion with complete-case filtering.

The on-disk schema is a UTF-8 CSV with a header row.  Time is given either as
an ISO-8601 ``date`` column or as explicit ``year`` and ``day`` columns, plus
one integer column per species.  An empty cell or a non-integer token counts
as missing; any row with a missing value is dropped (complete cases only).
February 29th rows are dropped separately and later days of leap years are
renumbered onto the 365-day grid.
"""
from __future__ import annotations

import csv
import datetime
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestError, InputError

_LEAP_FEB29_YDAY = 60


@dataclass(frozen=True)
class ObservationTable:
    """Complete-case table of daily species counts."""

    species_names: tuple[str, ...]
    years: np.ndarray
    days: np.ndarray
    counts: np.ndarray
    source: str = "<memory>"
    rows_dropped: int = 0
    leap_rows_dropped: int = 0

    def __post_init__(self):
        years = np.asarray(self.years, dtype=int)
        days = np.asarray(self.days, dtype=int)
        counts = np.asarray(self.counts, dtype=int)
        if counts.ndim != 2 or counts.shape != (years.shape[0], len(self.species_names)):
            raise InputError("counts must be (n_rows, n_species)")
        if days.shape != years.shape:
            raise InputError("years and days must align")
        if np.any((days < 1) | (days > 365)):
            raise InputError("day of year must lie in 1..365")
        if np.any(counts < 0):
            raise InputError("counts are nonnegative")
        object.__setattr__(self, "species_names", tuple(self.species_names))
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "counts", counts)

    @property
    def n_rows(self):
        return self.years.shape[0]

    @property
    def n_species(self):
        return len(self.species_names)

    def year_levels(self):
        return tuple(sorted(set(self.years.tolist())))


def _day_of_year_365(date: datetime.date):
    """Day index on the 365-day grid; None for February 29th."""
    yday = date.timetuple().tm_yday
    leap = date.year % 4 == 0 and (date.year % 100 != 0 or date.year % 400 == 0)
    if leap:
        if date.month == 2 and date.day == 29:
            return None
        if yday > _LEAP_FEB29_YDAY:
            return yday - 1
    return yday


def _parse_count(token):
    token = token.strip()
    if token == "":
        return None
    try:
        value = int(token)
    except ValueError:
        return None
    return value


def ingest_csv(path, species_columns):
    """Read a count CSV and return a complete-case :class:`ObservationTable`.

    ``species_columns`` fixes both the selection and the order of the species
    columns.  Rows with any missing species value are dropped and counted in
    ``rows_dropped``; leap-day rows are dropped and counted separately.
    """
    species_columns = list(species_columns)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("empty file") from None
        header = [h.strip() for h in header]
        colidx = {name: i for i, name in enumerate(header)}
        for name in species_columns:
            if name not in colidx:
                raise IngestError(f"unknown species column {name!r}", line=1)
        if "date" in colidx:
            time_mode = "date"
        elif "year" in colidx and "day" in colidx:
            time_mode = "year_day"
        else:
            raise IngestError("need either a 'date' column or 'year' and 'day' columns", line=1)

        years, days, counts = [], [], []
        rows_dropped = 0
        leap_dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if time_mode == "date":
                token = row[colidx["date"]].strip()
                try:
                    date = datetime.date.fromisoformat(token)
                except ValueError:
                    raise IngestError(f"malformed date {token!r}", line=lineno) from None
                day = _day_of_year_365(date)
                if day is None:
                    leap_dropped += 1
                    continue
                year = date.year
            else:
                try:
                    year = int(row[colidx["year"]])
                    day = int(row[colidx["day"]])
                except ValueError:
                    raise IngestError("malformed year/day", line=lineno) from None
                if not 1 <= day <= 365:
                    raise IngestError(f"day {day} outside 1..365", line=lineno)
            values = []
            for name in species_columns:
                value = _parse_count(row[colidx[name]])
                if value is not None and value < 0:
                    raise IngestError(f"negative count in column {name!r}", line=lineno)
                values.append(value)
            if any(v is None for v in values):
                rows_dropped += 1
                continue
            years.append(year)
            days.append(day)
            counts.append(values)

    if not years:
        raise IngestError("no complete rows after filtering")
    return ObservationTable(
        species_names=tuple(species_columns),
        years=np.array(years, dtype=int),
        days=np.array(days, dtype=int),
        counts=np.array(counts, dtype=int),
        source=str(path),
        rows_dropped=rows_dropped,
        leap_rows_dropped=leap_dropped,
    )


def write_csv(table: ObservationTable, path):
    """Write a table in the same schema :func:`ingest_csv` reads."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "day", *table.species_names])
        for i in range(table.n_rows):
            writer.writerow(
                [int(table.years[i]), int(table.days[i]), *map(int, table.counts[i])]
            )
