"""Degree-1 (piecewise linear) B-spline bases over a knot vector.

Each basis function is a "tent" peaking at 1 on its own knot and decaying
linearly to 0 at the adjacent knots, so a coefficient vector is exactly
the fitted values at the knots and the fitted curve is the continuous
piecewise-linear interpolant of those values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import AnalysisWindow
from .errors import DataError


@dataclass(frozen=True)
class KnotVector:
    """Internal knots plus a right boundary.

    The left boundary coincides with the first internal knot, so the
    distinct breakpoints are the internal knots followed by the right
    boundary, and there is one basis function per breakpoint.
    """

    internal: tuple[float, ...]
    upper: float

    def __post_init__(self):
        object.__setattr__(self, "internal", tuple(float(k) for k in self.internal))
        object.__setattr__(self, "upper", float(self.upper))
        if not self.internal:
            raise DataError("need at least one internal knot")
        for a, b in zip(self.internal, self.internal[1:]):
            if not (a < b):
                raise DataError(f"knots must be strictly increasing, got {self.internal}")
        if not (self.internal[-1] < self.upper):
            raise DataError(
                f"right boundary {self.upper} must exceed last internal knot {self.internal[-1]}"
            )

    @property
    def lower(self) -> float:
        return self.internal[0]

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self.internal + (self.upper,)

    @property
    def n_basis(self) -> int:
        return len(self.internal) + 1

    @property
    def n_segments(self) -> int:
        return len(self.internal)

    def segment_lengths(self) -> np.ndarray:
        bp = np.asarray(self.breakpoints)
        return np.diff(bp)


def default_knots(window: AnalysisWindow, n_internal: int = 4) -> KnotVector:
    """Evenly spaced internal knots over the window.

    The default four internal knots on a [0, 1] window sit at 0, 0.25,
    0.5 and 0.75, with the right boundary at 1.
    """
    if n_internal < 1:
        raise DataError("need at least one internal knot")
    span = window.end - window.start
    internal = tuple(window.start + i * span / n_internal for i in range(n_internal))
    return KnotVector(internal, window.end)


def basis_row(t: float, knots: KnotVector) -> np.ndarray:
    """Evaluate all degree-1 basis functions at a single age.

    At most two entries are nonzero and the row sums to 1 (partition of
    unity). Evaluation exactly at the right boundary uses the left-limit
    convention so the last basis function attains 1 there.
    """
    bp = knots.breakpoints
    if not (bp[0] <= t <= bp[-1]):
        raise DataError(f"age {t} outside knot boundary [{bp[0]}, {bp[-1]}]")
    row = np.zeros(knots.n_basis)
    # locate the segment [bp[j], bp[j+1]] containing t; t == upper falls in
    # the last segment
    j = int(np.searchsorted(bp, t, side="right")) - 1
    if j >= knots.n_segments:
        j = knots.n_segments - 1
    h = bp[j + 1] - bp[j]
    w = (t - bp[j]) / h
    row[j] = 1.0 - w
    row[j + 1] = w
    return row


def design_matrix(ages, knots: KnotVector) -> np.ndarray:
    """Stack basis rows for a list of ages into an (n, K+1) matrix."""
    ages = np.asarray(ages, dtype=float)
    bp = np.asarray(knots.breakpoints)
    if ages.size == 0:
        return np.zeros((0, knots.n_basis))
    if np.any(ages < bp[0]) or np.any(ages > bp[-1]):
        bad = ages[(ages < bp[0]) | (ages > bp[-1])][0]
        raise DataError(f"age {bad} outside knot boundary [{bp[0]}, {bp[-1]}]")
    j = np.searchsorted(bp, ages, side="right") - 1
    j = np.minimum(j, knots.n_segments - 1)
    w = (ages - bp[j]) / (bp[j + 1] - bp[j])
    out = np.zeros((ages.size, knots.n_basis))
    rows = np.arange(ages.size)
    out[rows, j] = 1.0 - w
    out[rows, j + 1] = w
    return out
