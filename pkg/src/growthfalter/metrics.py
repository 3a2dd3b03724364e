"""Per-child growth velocity under the eight supported metrics.

The SDS family works directly on raw endpoints; the model families read
per-child coefficients out of fitted mixed models:

* SDS / cSDS: z-score change between the first and last in-window
  observation, optionally adjusted for regression to the mean through the
  cohort baseline-followup correlation;
* RS / cRS: child-specific slope from the (conditional) random-slopes
  model;
* ARS / cARS and MRS / cMRS: duration-weighted average and minimum of the
  child's per-segment slopes from the (conditional) broken-stick model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import lmm
from .data import AnalysisWindow, GrowthDataset, baseline, followup
from .errors import DataError, DegenerateDataError, MalformedRowError
from .splines import KnotVector, default_knots

METRICS = ("SDS", "cSDS", "RS", "cRS", "ARS", "cARS", "MRS", "cMRS")
CONDITIONAL_METRICS = ("cSDS", "cRS", "cARS", "cMRS")


@dataclass(frozen=True)
class VelocityTable:
    """Velocities for one metric, with undefined children kept explicit.

    Every child of the source dataset appears either in `entries` or in
    `undefined_children`, so classifier denominators are never implicit.
    """

    metric: str
    entries: dict
    undefined_children: tuple[str, ...] = ()

    def __post_init__(self):
        if self.metric not in METRICS:
            raise DataError(f"unknown metric {self.metric!r}")
        overlap = set(self.entries) & set(self.undefined_children)
        if overlap:
            raise DataError(f"children both defined and undefined: {sorted(overlap)}")
        for cid, v in self.entries.items():
            if not math.isfinite(v):
                raise DataError(f"non-finite velocity for child {cid!r}")

    def defined_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.entries))

    def values(self) -> np.ndarray:
        return np.array([self.entries[cid] for cid in self.defined_ids()])

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class SegmentSlopes:
    """Per-child slope of each inter-knot segment of a broken-stick fit.

    Slopes are differences of the child's predicted values at consecutive
    knots over the segment length; for conditional fits the interaction
    term adds the same baseline-proportional shift to every segment.
    """

    knots: KnotVector
    slopes: dict
    conditional: bool = False

    def child_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.slopes))


def sds(dataset: GrowthDataset) -> VelocityTable:
    """Followup minus baseline z-score; undefined below two observations."""
    entries = {}
    undefined = []
    for child in dataset.children:
        last = followup(child, dataset.window)
        if last is None:
            undefined.append(child.child_id)
            continue
        first = baseline(child, dataset.window)
        entries[child.child_id] = last.zscore - first.zscore
    return VelocityTable("SDS", entries, tuple(undefined))


def _endpoint_pairs(dataset: GrowthDataset):
    pairs = {}
    undefined = []
    for child in dataset.children:
        last = followup(child, dataset.window)
        if last is None:
            undefined.append(child.child_id)
            continue
        first = baseline(child, dataset.window)
        pairs[child.child_id] = (first.zscore, last.zscore)
    return pairs, tuple(undefined)


def csds(dataset: GrowthDataset) -> VelocityTable:
    """SDS adjusted for regression to the mean.

    Uses the cohort Pearson correlation r between baseline and followup
    z-scores: velocity = (z1 - r z0) / sqrt(1 - r^2).
    """
    pairs, undefined = _endpoint_pairs(dataset)
    if len(pairs) < 3:
        raise DataError(f"cSDS needs at least 3 children with endpoints, got {len(pairs)}")
    z0 = np.array([pairs[cid][0] for cid in sorted(pairs)])
    z1 = np.array([pairs[cid][1] for cid in sorted(pairs)])
    s0 = np.std(z0)
    s1 = np.std(z1)
    if s0 == 0 or s1 == 0:
        raise DegenerateDataError("baseline or followup z-scores carry no variation")
    r = float(np.mean((z0 - z0.mean()) * (z1 - z1.mean())) / (s0 * s1))
    if 1.0 - r * r <= 1e-12:
        raise DegenerateDataError(f"baseline and followup are collinear (r = {r})")
    denom = math.sqrt(1.0 - r * r)
    entries = {cid: (pairs[cid][1] - r * pairs[cid][0]) / denom for cid in pairs}
    return VelocityTable("cSDS", entries, undefined)


def _require_kind(fit: lmm.MixedModelFit, kind: str):
    if fit.spec.kind != kind:
        raise DataError(f"expected a {kind} fit, got {fit.spec.kind}")


def rs(fit: lmm.MixedModelFit) -> VelocityTable:
    """Child-specific slope: fixed slope plus the child's slope deviation."""
    _require_kind(fit, lmm.RS)
    entries = {cid: float(coef[1]) for cid, coef in fit.blups.items()}
    return VelocityTable("RS", entries)


def crs(
    fit: lmm.MixedModelFit,
    baselines: dict | None = None,
    window: AnalysisWindow | None = None,
) -> VelocityTable:
    """Conditional child slope: slope coefficient plus interaction shift.

    Equals the predicted-value difference over the window divided by its
    length; since the conditional model is still linear in age, the
    result is the same for every window, and `window` is accepted only
    for interface symmetry. Baselines default to the ones recorded in
    the fit.
    """
    _require_kind(fit, lmm.CRS)
    if baselines is None:
        baselines = fit.baselines
    beta_int = fit.interaction_coefficient
    entries = {}
    for cid, coef in fit.blups.items():
        if cid not in baselines:
            raise DataError(f"missing baseline for child {cid!r}")
        entries[cid] = float(coef[1] + beta_int * baselines[cid])
    return VelocityTable("cRS", entries, fit.excluded_children)


def segment_slopes(
    fit: lmm.MixedModelFit, baselines: dict | None = None
) -> SegmentSlopes:
    """Per-segment slopes of a broken-stick fit for every fitted child."""
    if fit.spec.kind not in (lmm.BROKEN_STICK, lmm.CBROKEN_STICK):
        raise DataError(f"expected a broken-stick fit, got {fit.spec.kind}")
    knots = fit.spec.knots
    lengths = knots.segment_lengths()
    conditional = fit.spec.conditional
    shift = {}
    if conditional:
        if baselines is None:
            baselines = fit.baselines
        beta_int = fit.interaction_coefficient
        for cid in fit.blups:
            if cid not in baselines:
                raise DataError(f"missing baseline for child {cid!r}")
            shift[cid] = beta_int * baselines[cid]
    slopes = {}
    for cid, coef in fit.blups.items():
        per_segment = np.diff(coef) / lengths
        if conditional:
            per_segment = per_segment + shift[cid]
        slopes[cid] = per_segment
    return SegmentSlopes(knots=knots, slopes=slopes, conditional=conditional)


def ars(slopes: SegmentSlopes, knots: KnotVector | None = None) -> VelocityTable:
    """Duration-weighted mean slope across segments.

    Telescopes to the predicted-value difference between the boundary
    knots divided by the total span.
    """
    knots = knots or slopes.knots
    if knots.breakpoints != slopes.knots.breakpoints:
        raise DataError("knot vector does not match the one the slopes came from")
    weights = knots.segment_lengths()
    span = knots.upper - knots.lower
    entries = {
        cid: float(seg @ weights / span) for cid, seg in slopes.slopes.items()
    }
    return VelocityTable("cARS" if slopes.conditional else "ARS", entries)


def mrs(slopes: SegmentSlopes) -> VelocityTable:
    """Minimum slope across segments."""
    entries = {cid: float(np.min(seg)) for cid, seg in slopes.slopes.items()}
    return VelocityTable("cMRS" if slopes.conditional else "MRS", entries)


@dataclass(frozen=True)
class MetricConfig:
    """Knobs shared by all model-based metrics."""

    knots: KnotVector | None = None
    reml: bool = True
    drop_baseline_rows: bool = False
    rel_tol: float = 1e-8
    max_evals: int = 10000

    def resolve_knots(self, window: AnalysisWindow) -> KnotVector:
        return self.knots if self.knots is not None else default_knots(window)


class VelocityEngine:
    """Computes velocity tables on demand, caching model fits.

    Requesting ARS and MRS (or their conditional variants) reuses the
    single underlying broken-stick fit.
    """

    def __init__(self, dataset: GrowthDataset, config: MetricConfig | None = None):
        self.dataset = dataset
        self.config = config or MetricConfig()
        self.knots = self.config.resolve_knots(dataset.window)
        self._fits: dict[str, lmm.MixedModelFit] = {}

    def model_fit(self, kind: str) -> lmm.MixedModelFit:
        if kind not in self._fits:
            knots = self.knots if kind in (lmm.BROKEN_STICK, lmm.CBROKEN_STICK) else None
            self._fits[kind] = lmm.fit(
                self.dataset,
                lmm.ModelSpec(kind, knots),
                reml=self.config.reml,
                drop_baseline_rows=self.config.drop_baseline_rows,
                rel_tol=self.config.rel_tol,
                max_evals=self.config.max_evals,
            )
        return self._fits[kind]

    def fit_for_metric(self, metric: str) -> lmm.MixedModelFit | None:
        kind = {
            "RS": lmm.RS,
            "cRS": lmm.CRS,
            "ARS": lmm.BROKEN_STICK,
            "MRS": lmm.BROKEN_STICK,
            "cARS": lmm.CBROKEN_STICK,
            "cMRS": lmm.CBROKEN_STICK,
        }.get(metric)
        return self.model_fit(kind) if kind else None

    def table(self, metric: str) -> VelocityTable:
        if metric == "SDS":
            return sds(self.dataset)
        if metric == "cSDS":
            return csds(self.dataset)
        if metric == "RS":
            return rs(self.model_fit(lmm.RS))
        if metric == "cRS":
            return crs(self.model_fit(lmm.CRS))
        if metric in ("ARS", "MRS"):
            seg = segment_slopes(self.model_fit(lmm.BROKEN_STICK))
            return ars(seg) if metric == "ARS" else mrs(seg)
        if metric in ("cARS", "cMRS"):
            seg = segment_slopes(self.model_fit(lmm.CBROKEN_STICK))
            return ars(seg) if metric == "cARS" else mrs(seg)
        raise DataError(f"unknown metric {metric!r}")


def compute(
    metric: str, dataset: GrowthDataset, config: MetricConfig | None = None
) -> VelocityTable:
    """One-shot velocity table for any metric."""
    return VelocityEngine(dataset, config).table(metric)


def write_table(table: VelocityTable, target) -> None:
    """Delimited export: child_id, metric, velocity, defined flag."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            write_table(table, fh)
            return
    target.write("child_id,metric,velocity,defined\n")
    for cid in sorted(set(table.entries) | set(table.undefined_children)):
        if cid in table.entries:
            target.write(f"{cid},{table.metric},{table.entries[cid]!r},1\n")
        else:
            target.write(f"{cid},{table.metric},,0\n")


def read_table(source) -> VelocityTable:
    """Parse a velocity table written by `write_table`."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_table(fh)
    header = source.readline().rstrip("\n")
    if header != "child_id,metric,velocity,defined":
        raise DataError(f"unexpected velocity table header {header!r}")
    entries = {}
    undefined = []
    metric = None
    for row_number, line in enumerate(source, start=2):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split(",")
        if len(parts) != 4:
            raise MalformedRowError(row_number, f"expected 4 fields, got {len(parts)}")
        cid, row_metric, velocity, defined = parts
        if metric is None:
            metric = row_metric
        elif metric != row_metric:
            raise MalformedRowError(row_number, "mixed metrics in one table")
        if defined == "1":
            try:
                entries[cid] = float(velocity)
            except ValueError as exc:
                raise MalformedRowError(row_number, str(exc)) from None
        elif defined == "0":
            undefined.append(cid)
        else:
            raise MalformedRowError(row_number, f"bad defined flag {defined!r}")
    if metric is None:
        raise DataError("empty velocity table")
    return VelocityTable(metric, entries, tuple(undefined))
