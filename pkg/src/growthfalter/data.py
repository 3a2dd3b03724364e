"""Data model and ingestion for longitudinal standardized growth measurements.

A dataset holds one z-score index per file (e.g. height-for-age); children
are identified by an opaque id and carry an age-sorted series of
measurements restricted to an analysis window.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DataError,
    DuplicateMeasurementError,
    EmptyDatasetError,
    MalformedRowError,
)

DAYS_PER_YEAR = 365.25
DEFAULT_EXCLUSION_BOUND = 6.0


@dataclass(frozen=True, order=True)
class Measurement:
    """One observation: age in years, standardized score (z-score)."""

    age: float
    zscore: float

    def __post_init__(self):
        if not (self.age >= 0.0):
            raise DataError(f"age must be non-negative, got {self.age}")
        if not math.isfinite(self.zscore):
            raise DataError(f"zscore must be finite, got {self.zscore}")


@dataclass(frozen=True)
class AnalysisWindow:
    """Closed age interval [start, end] in years."""

    start: float
    end: float

    def __post_init__(self):
        if not (self.start < self.end):
            raise DataError(f"window start must precede end, got [{self.start}, {self.end}]")

    def contains(self, age: float) -> bool:
        return self.start <= age <= self.end


@dataclass(frozen=True)
class ChildSeries:
    """One child's measurements, strictly ascending in age."""

    child_id: str
    measurements: tuple[Measurement, ...]

    def __post_init__(self):
        if not self.measurements:
            raise DataError(f"child {self.child_id} has no measurements")
        ages = [m.age for m in self.measurements]
        for a, b in zip(ages, ages[1:]):
            if a >= b:
                raise DuplicateMeasurementError(
                    f"child {self.child_id}: measurements not strictly ascending at age {b}"
                )

    def in_window(self, window: AnalysisWindow) -> tuple[Measurement, ...]:
        return tuple(m for m in self.measurements if window.contains(m.age))


@dataclass(frozen=True)
class GrowthDataset:
    """Immutable collection of child series inside one analysis window.

    Children are stored sorted by id, so datasets built from the same rows
    in any order compare (and compute) identically.
    """

    children: tuple[ChildSeries, ...]
    window: AnalysisWindow
    exclusion_bound: float = DEFAULT_EXCLUSION_BOUND
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.exclusion_bound > 0):
            raise DataError(f"exclusion bound must be positive, got {self.exclusion_bound}")
        ordered = tuple(sorted(self.children, key=lambda c: c.child_id))
        object.__setattr__(self, "children", ordered)
        index = {}
        for child in ordered:
            if child.child_id in index:
                raise DataError(f"duplicate child id {child.child_id!r}")
            for m in child.measurements:
                if not self.window.contains(m.age):
                    raise DataError(
                        f"child {child.child_id}: age {m.age} outside window "
                        f"[{self.window.start}, {self.window.end}]"
                    )
                if abs(m.zscore) > self.exclusion_bound:
                    raise DataError(
                        f"child {child.child_id}: |zscore| {abs(m.zscore)} exceeds "
                        f"bound {self.exclusion_bound}"
                    )
            index[child.child_id] = child
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.children)

    def child_ids(self) -> tuple[str, ...]:
        return tuple(c.child_id for c in self.children)

    def child(self, child_id: str) -> ChildSeries:
        try:
            return self._index[child_id]
        except KeyError:
            raise KeyError(f"unknown child id {child_id!r}") from None

    def n_measurements(self) -> int:
        return sum(len(c.measurements) for c in self.children)


@dataclass(frozen=True)
class IngestReport:
    """Row and child accounting from one ingestion pass."""

    rows_read: int
    rows_out_of_window: int
    rows_extreme_zscore: int
    children_dropped: tuple[str, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows_read": self.rows_read,
                "rows_excluded": {
                    "out_of_window": self.rows_out_of_window,
                    "extreme_zscore": self.rows_extreme_zscore,
                },
                "children_dropped": list(self.children_dropped),
            },
            indent=2,
        )


def _detect_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def _parse_header(header: str, delimiter: str, expected=("child_id", "age", "zscore")):
    names = [h.strip() for h in header.rstrip("\n").split(delimiter)]
    if tuple(names) != tuple(expected):
        raise DataError(
            f"expected header {','.join(expected)!r}, got {','.join(names)!r}"
        )


def ingest(
    source,
    age_unit: str = "years",
    window: AnalysisWindow = AnalysisWindow(0.0, 1.0),
    exclusion_bound: float = DEFAULT_EXCLUSION_BOUND,
) -> tuple[GrowthDataset, IngestReport]:
    """Read delimited rows (child_id, age, zscore) into a GrowthDataset.

    `source` may be a path or an open text stream. The delimiter (comma or
    tab) is detected from the header row. Ages in days are converted to
    years with 365.25 days per year.

    Rows outside the window or with |zscore| above the bound are dropped
    and counted; children left without any retained measurement are
    dropped and reported. Duplicate (child_id, age) pairs among retained
    rows are an error rather than silently averaged.
    """
    if age_unit not in ("days", "years"):
        raise DataError(f"age_unit must be 'days' or 'years', got {age_unit!r}")
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return ingest(fh, age_unit, window, exclusion_bound)

    header = source.readline()
    if not header.strip():
        raise DataError("empty input: missing header row")
    delimiter = _detect_delimiter(header)
    _parse_header(header, delimiter)

    rows_read = 0
    out_of_window = 0
    extreme = 0
    retained: dict[str, dict[float, float]] = {}
    seen_children: list[str] = []

    for row_number, line in enumerate(source, start=2):
        if not line.strip():
            continue
        rows_read += 1
        parts = line.rstrip("\n").split(delimiter)
        if len(parts) != 3:
            raise MalformedRowError(row_number, f"expected 3 fields, got {len(parts)}")
        child_id = parts[0].strip()
        if not child_id:
            raise MalformedRowError(row_number, "empty child_id")
        try:
            age = float(parts[1])
            zscore = float(parts[2])
        except ValueError as exc:
            raise MalformedRowError(row_number, str(exc)) from None
        if not (math.isfinite(age) and math.isfinite(zscore)):
            raise MalformedRowError(row_number, "non-finite age or zscore")
        if age_unit == "days":
            age = age / DAYS_PER_YEAR
        if age < 0:
            raise MalformedRowError(row_number, f"negative age {age}")

        if child_id not in retained:
            retained[child_id] = {}
            seen_children.append(child_id)
        if not window.contains(age):
            out_of_window += 1
            continue
        if abs(zscore) > exclusion_bound:
            extreme += 1
            continue
        if age in retained[child_id]:
            raise DuplicateMeasurementError(
                f"duplicate measurement for child {child_id!r} at age {age} "
                f"(row {row_number})"
            )
        retained[child_id][age] = zscore

    children = []
    dropped = []
    for child_id in seen_children:
        ages = retained[child_id]
        if not ages:
            dropped.append(child_id)
            continue
        measurements = tuple(
            Measurement(age, ages[age]) for age in sorted(ages)
        )
        children.append(ChildSeries(child_id, measurements))

    if not children:
        raise EmptyDatasetError("no children with retained measurements")

    dataset = GrowthDataset(tuple(children), window, exclusion_bound)
    report = IngestReport(
        rows_read=rows_read,
        rows_out_of_window=out_of_window,
        rows_extreme_zscore=extreme,
        children_dropped=tuple(sorted(dropped)),
    )
    return dataset, report


def baseline(series: ChildSeries, window: AnalysisWindow) -> Measurement:
    """In-window measurement with the smallest age."""
    in_win = series.in_window(window)
    if not in_win:
        raise DataError(f"child {series.child_id}: no measurements in window")
    return in_win[0]


def followup(series: ChildSeries, window: AnalysisWindow) -> Measurement | None:
    """In-window measurement with the largest age.

    Returns None when the series has fewer than two in-window measurements
    (a single observation cannot provide both endpoints).
    """
    in_win = series.in_window(window)
    if len(in_win) < 2:
        return None
    return in_win[-1]


def write_canonical(dataset: GrowthDataset, target) -> None:
    """Write the dataset back out in its canonical delimited form.

    Comma-delimited, header `child_id,age,zscore`, sorted by (child_id,
    age). Ingesting the result reproduces the dataset exactly.
    """
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            write_canonical(dataset, fh)
            return
    target.write("child_id,age,zscore\n")
    for child in dataset.children:
        for m in child.measurements:
            target.write(f"{child.child_id},{m.age!r},{m.zscore!r}\n")


def canonical_text(dataset: GrowthDataset) -> str:
    buf = io.StringIO()
    write_canonical(dataset, buf)
    return buf.getvalue()
