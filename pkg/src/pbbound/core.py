"""Data model, CSV ingestion, and the embedded case-study datasets.

A meta-analysis is a list of (effect estimate, standard error) pairs.
Two input formats are supported: `ys-csv` with precomputed estimates and
`counts-csv` with 2x2 event tables that are converted to log odds
ratios.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np


class DatasetError(ValueError):
    """Malformed dataset input."""


@dataclass(frozen=True)
class Study:
    """One published study: effect estimate `y` (e.g. lnOR) and its
    within-study standard error `s`."""

    y: float
    s: float
    label: str = ""

    def __post_init__(self):
        if not math.isfinite(self.y):
            raise DatasetError(f"study {self.label!r}: non-finite y={self.y}")
        if not (math.isfinite(self.s) and self.s > 0):
            raise DatasetError(f"study {self.label!r}: s must be positive, got {self.s}")


@dataclass(frozen=True)
class MetaDataset:
    """Ordered collection of at least two studies.  Immutable."""

    studies: tuple[Study, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "studies", tuple(self.studies))
        if len(self.studies) < 2:
            raise DatasetError(f"need at least 2 studies, got {len(self.studies)}")

    @property
    def n(self) -> int:
        return len(self.studies)

    @property
    def y(self) -> np.ndarray:
        return np.array([st.y for st in self.studies])

    @property
    def s(self) -> np.ndarray:
        return np.array([st.s for st in self.studies])

    def to_ys_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "y", "s"])
        for st in self.studies:
            w.writerow([st.label, repr(st.y), repr(st.s)])
        return buf.getvalue()


@dataclass(frozen=True)
class CountTable:
    """2x2 table of events/group sizes for one two-arm study."""

    events_trt: int
    n_trt: int
    events_ctl: int
    n_ctl: int
    label: str = ""

    def __post_init__(self):
        for name in ("events_trt", "n_trt", "events_ctl", "n_ctl"):
            v = getattr(self, name)
            if v != int(v) or v < 0:
                raise DatasetError(f"study {self.label!r}: {name}={v} must be a nonnegative integer")
        if self.n_trt <= 0 and self.n_ctl <= 0:
            raise DatasetError(f"study {self.label!r}: both arms empty")
        if self.events_trt > self.n_trt or self.events_ctl > self.n_ctl:
            raise DatasetError(f"study {self.label!r}: events exceed group size")


def lnor_from_counts(t: CountTable, correction: float = 0.5) -> Study:
    """Log odds ratio and standard error from a 2x2 table.

    When any of the four cells (events or non-events in either arm) is
    zero, `correction` is added to all four cells (classic continuity
    correction).  Tables that stay degenerate after correction are
    rejected.
    """
    if correction < 0:
        raise DatasetError("correction must be nonnegative")
    a = float(t.events_trt)
    b = float(t.n_trt - t.events_trt)
    c = float(t.events_ctl)
    d = float(t.n_ctl - t.events_ctl)
    if min(a, b, c, d) == 0.0:
        a, b, c, d = a + correction, b + correction, c + correction, d + correction
    if min(a, b, c, d) <= 0.0:
        raise DatasetError(
            f"study {t.label!r}: degenerate 2x2 table after correction "
            f"({a:g}, {b:g}, {c:g}, {d:g})"
        )
    y = math.log(a * d / (b * c))
    s = math.sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d)
    return Study(y=y, s=s, label=t.label)


_YS_HEADER = ["label", "y", "s"]
_COUNTS_HEADER = ["label", "events_trt", "n_trt", "events_ctl", "n_ctl"]


def load_dataset(source, format: str = "ys-csv", correction: float = 0.5,
                 name: str = "") -> MetaDataset:
    """Read a MetaDataset from a file path, text stream, or CSV string.

    `format` is "ys-csv" (header label,y,s) or "counts-csv" (header
    label,events_trt,n_trt,events_ctl,n_ctl); counts are converted via
    :func:`lnor_from_counts`.
    """
    if isinstance(source, str) and source and "\n" not in source:
        with open(source, newline="") as fh:
            return load_dataset(fh, format=format, correction=correction, name=name)
    if isinstance(source, str):
        source = io.StringIO(source)
    if isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode("utf-8"))

    rows = list(csv.reader(source))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DatasetError("empty dataset file")
    header = [h.strip().lower() for h in rows[0]]

    studies = []
    if format == "ys-csv":
        if header != _YS_HEADER:
            raise DatasetError(f"expected header {','.join(_YS_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 3:
                raise DatasetError(f"line {lineno}: expected 3 fields, got {len(row)}")
            label, y_str, s_str = (cell.strip() for cell in row)
            try:
                studies.append(Study(y=float(y_str), s=float(s_str), label=label))
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: {exc}") from exc
    elif format == "counts-csv":
        if header != _COUNTS_HEADER:
            raise DatasetError(f"expected header {','.join(_COUNTS_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 5:
                raise DatasetError(f"line {lineno}: expected 5 fields, got {len(row)}")
            label = row[0].strip()
            try:
                nums = [int(cell) for cell in row[1:]]
                table = CountTable(*nums, label=label)
                studies.append(lnor_from_counts(table, correction=correction))
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: {exc}") from exc
    else:
        raise DatasetError(f"unknown format {format!r}")

    return MetaDataset(studies=tuple(studies), name=name)


# ---------------------------------------------------------------------------
# Embedded case studies.
#
# Prophylactic corticosteroids for preterm delivery: 14 RCTs, effect of
# treatment on infant death, reported as lnOR with a precision (= 1/s)
# column.  Stored as (label, lnOR, precision).
_CORTICOSTEROIDS = [
    ("1", -1.55, 1.57),
    ("2", -1.49, 1.07),
    ("3", -1.33, 1.71),
    ("4", -0.35, 2.72),
    ("5", -0.19, 1.98),
    ("6", -0.43, 1.88),
    ("7", -0.61, 2.11),
    ("8", -0.97, 1.48),
    ("9", -1.64, 1.10),
    ("10", -1.19, 0.60),
    ("11", -0.28, 1.47),
    ("12", 0.03, 2.00),
    ("13", -0.06, 3.90),
    ("14", -0.54, 4.56),
]

# High- vs standard-maintenance-dose clopidogrel, MACE outcomes: 12
# trials as (label, events_high, n_high, events_std, n_std).  Rows 1 and
# 3 have zero events in both arms.
_CLOPIDOGREL = [
    ("Angiolillo 2008", 0, 20, 0, 20),
    ("Aradi 2012", 1, 36, 0, 38),
    ("ARMYDA-150mg 2011", 0, 25, 0, 25),
    ("DOUBLE 2010", 1, 24, 0, 24),
    ("EFFICIENT 2011", 4, 47, 1, 47),
    ("GRAVITAS 2011", 133, 1109, 113, 1105),
    ("Han 2009", 3, 403, 1, 410),
    ("Roghani 2011", 3, 205, 2, 195),
    ("Tousek 2011", 2, 30, 2, 30),
    ("VASP-02 2008", 11, 58, 14, 62),
    ("von Beckerath 2007", 2, 31, 2, 29),
    ("Wang 2011", 9, 150, 25, 156),
]

DATASET_NAMES = ("corticosteroids", "clopidogrel")


def load_example(name: str, correction: float = 0.5,
                 drop_double_zero: bool = False) -> MetaDataset:
    """Embedded dataset by name: "corticosteroids" or "clopidogrel".

    `drop_double_zero` removes count tables with zero events in both
    arms (clopidogrel only); by default they are retained with the
    continuity correction.
    """
    if name == "corticosteroids":
        studies = tuple(
            Study(y=y, s=1.0 / prec, label=label) for label, y, prec in _CORTICOSTEROIDS
        )
        return MetaDataset(studies=studies, name=name)
    if name == "clopidogrel":
        rows = _CLOPIDOGREL
        if drop_double_zero:
            rows = [r for r in rows if not (r[1] == 0 and r[3] == 0)]
        studies = tuple(
            lnor_from_counts(CountTable(a, n1, c, n2, label=label), correction=correction)
            for label, a, n1, c, n2 in rows
        )
        return MetaDataset(studies=studies, name=name)
    raise DatasetError(f"unknown dataset {name!r}; available: {', '.join(DATASET_NAMES)}")


def example_counts(name: str) -> list[CountTable]:
    """Raw 2x2 tables for the embedded counts dataset."""
    if name != "clopidogrel":
        raise DatasetError(f"no embedded count tables for {name!r}")
    return [CountTable(a, n1, c, n2, label=label) for label, a, n1, c, n2 in _CLOPIDOGREL]
