import io
import math

import numpy as np
import pytest

from growthfalter.data import (
    AnalysisWindow,
    ChildSeries,
    GrowthDataset,
    Measurement,
    baseline,
    canonical_text,
    followup,
    ingest,
    write_canonical,
)
from growthfalter.errors import (
    DataError,
    DuplicateMeasurementError,
    EmptyDatasetError,
    MalformedRowError,
)

WINDOW = AnalysisWindow(0.0, 1.0)


def _ingest(text, **kwargs):
    return ingest(io.StringIO(text), **kwargs)


def test_ingest_basic_two_rows():
    ds, report = _ingest("child_id,age,zscore\nc1,0.09,-3.56\nc1,0.95,-3.03\n")
    assert len(ds) == 1
    child = ds.child("c1")
    assert [m.age for m in child.measurements] == [0.09, 0.95]
    assert [m.zscore for m in child.measurements] == [-3.56, -3.03]
    assert report.rows_read == 2
    assert report.rows_extreme_zscore == 0


def test_ingest_drops_extreme_zscore_and_child():
    text = "child_id,age,zscore\nc1,0.1,-1.0\nc2,0.5,7.1\n"
    ds, report = _ingest(text)
    assert ds.child_ids() == ("c1",)
    assert report.rows_extreme_zscore == 1
    assert report.children_dropped == ("c2",)


def test_ingest_day_unit_conversion():
    ds, _ = _ingest("child_id,age,zscore\nc1,200,-1.0\nc1,300,-1.2\n", age_unit="days")
    ages = [m.age for m in ds.child("c1").measurements]
    assert ages[0] == pytest.approx(200 / 365.25, abs=0)
    assert ages[0] == pytest.approx(0.5476, abs=5e-5)


def test_ingest_out_of_window_rows_dropped():
    ds, report = _ingest("child_id,age,zscore\nc1,0.5,-1\nc1,1.5,-2\n")
    assert len(ds.child("c1").measurements) == 1
    assert report.rows_out_of_window == 1


def test_ingest_malformed_row_reports_row_number():
    with pytest.raises(MalformedRowError) as err:
        _ingest("child_id,age,zscore\nc1,0.5,-1\nc1,bogus,-2\n")
    assert err.value.row_number == 3


def test_ingest_wrong_field_count():
    with pytest.raises(MalformedRowError):
        _ingest("child_id,age,zscore\nc1,0.5\n")


def test_ingest_duplicate_child_age_errors():
    with pytest.raises(DuplicateMeasurementError):
        _ingest("child_id,age,zscore\nc1,0.5,-1\nc1,0.5,-1.5\n")


def test_ingest_duplicate_only_counts_retained_rows():
    # the first copy is excluded by the bound, so no duplicate remains
    ds, _ = _ingest("child_id,age,zscore\nc1,0.5,6.5\nc1,0.5,-1.5\nc1,0.6,0.0\n")
    assert len(ds.child("c1").measurements) == 2


def test_ingest_empty_result_errors():
    with pytest.raises(EmptyDatasetError):
        _ingest("child_id,age,zscore\nc1,5.0,-1\n")


def test_ingest_rejects_bad_header_and_unit():
    with pytest.raises(DataError):
        _ingest("id,age,z\nc1,0.5,-1\n")
    with pytest.raises(DataError):
        _ingest("child_id,age,zscore\n", age_unit="weeks")


def test_ingest_tab_delimiter_detected():
    ds, _ = _ingest("child_id\tage\tzscore\nc1\t0.5\t-1\nc1\t0.7\t-1.2\n")
    assert len(ds.child("c1").measurements) == 2


def test_ingest_custom_bound():
    ds, report = _ingest(
        "child_id,age,zscore\nc1,0.5,2.5\nc1,0.6,-1\n", exclusion_bound=2.0
    )
    assert len(ds.child("c1").measurements) == 1
    assert report.rows_extreme_zscore == 1


def test_ingest_idempotent_roundtrip():
    rng = np.random.default_rng(42)
    children = []
    for i in range(20):
        ages = np.sort(rng.uniform(0, 1, rng.integers(1, 8)))
        ages = np.unique(ages)
        meas = tuple(Measurement(float(a), float(rng.normal())) for a in ages)
        children.append(ChildSeries(f"k{i:02d}", meas))
    ds = GrowthDataset(tuple(children), WINDOW)
    text = canonical_text(ds)
    ds2, _ = _ingest(text)
    assert ds2 == ds
    assert canonical_text(ds2) == text


def test_retained_measurements_respect_window_and_bound():
    rng = np.random.default_rng(7)
    rows = ["child_id,age,zscore"]
    for i in range(300):
        rows.append(f"c{rng.integers(0, 30):02d},{rng.uniform(0.0, 1.4)},{rng.normal(0, 3)}")
    ds, _ = _ingest("\n".join(rows) + "\n", exclusion_bound=4.0)
    for child in ds.children:
        for m in child.measurements:
            assert 0.0 <= m.age <= 1.0
            assert abs(m.zscore) <= 4.0


def _series(*pairs):
    return ChildSeries("c", tuple(Measurement(a, z) for a, z in pairs))


def test_baseline_is_min_age():
    s = _series((0.09, -3.56), (0.95, -3.03))
    assert baseline(s, WINDOW) == Measurement(0.09, -3.56)
    assert baseline(_series((0.2, 1.0)), WINDOW) == Measurement(0.2, 1.0)
    assert baseline(_series((0.1, 2.0), (0.2, 1.0)), WINDOW).age == 0.1


def test_baseline_requires_in_window_measurement():
    s = _series((0.5, 1.0))
    with pytest.raises(DataError):
        baseline(s, AnalysisWindow(0.6, 1.0))


def test_followup_is_max_age_or_absent():
    s = _series((0.09, -3.56), (0.95, -3.03))
    assert followup(s, WINDOW) == Measurement(0.95, -3.03)
    assert followup(_series((0.2, 1.0)), WINDOW) is None
    assert followup(_series((0.3, 0.0), (0.96, -1.0)), WINDOW).age == 0.96


def test_followup_needs_two_in_window():
    # two measurements but only one inside the window
    s = _series((0.1, 0.0), (2.0, 1.0))
    assert followup(s, WINDOW) is None


def test_baseline_not_after_followup():
    rng = np.random.default_rng(3)
    for _ in range(50):
        ages = np.unique(rng.uniform(0, 1, rng.integers(2, 9)))
        if ages.size < 2:
            continue
        s = ChildSeries("c", tuple(Measurement(float(a), 0.0) for a in ages))
        f = followup(s, WINDOW)
        assert f is not None
        assert baseline(s, WINDOW).age <= f.age


def test_measurement_validation():
    with pytest.raises(DataError):
        Measurement(-0.1, 0.0)
    with pytest.raises(DataError):
        Measurement(0.1, math.inf)


def test_window_validation():
    with pytest.raises(DataError):
        AnalysisWindow(1.0, 1.0)


def test_series_requires_strictly_ascending_ages():
    with pytest.raises(DuplicateMeasurementError):
        _series((0.5, 1.0), (0.5, 2.0))
    with pytest.raises(DataError):
        ChildSeries("c", ())


def test_dataset_validates_contents():
    with pytest.raises(DataError):
        GrowthDataset((_series((0.5, 1.0)), _series((0.6, 2.0))), WINDOW)  # dup ids
    with pytest.raises(DataError):
        GrowthDataset((_series((1.5, 1.0)),), WINDOW)  # outside window
    with pytest.raises(DataError):
        GrowthDataset((_series((0.5, 7.0)),), WINDOW)  # beyond bound


def test_dataset_sorts_children_by_id():
    a = ChildSeries("b", (Measurement(0.1, 0.0),))
    b = ChildSeries("a", (Measurement(0.2, 0.0),))
    ds = GrowthDataset((a, b), WINDOW)
    assert ds.child_ids() == ("a", "b")


def test_write_canonical_to_path(tmp_path):
    ds, _ = _ingest("child_id,age,zscore\nc1,0.09,-3.56\nc1,0.95,-3.03\n")
    path = tmp_path / "out.csv"
    write_canonical(ds, path)
    ds2, _ = ingest(path)
    assert ds2 == ds
