import csv
import json
import math

import numpy as np
import pytest

from helpers import random_rotation
from stereotwin.cli import reference_tables_path
from stereotwin.errors import (
    DegenerateConfigurationError,
    EmptyInputError,
    InsufficientPointsError,
    StereoTwinError,
    UndefinedPercentError,
)
from stereotwin.evaluation import (
    MeasurementRecord,
    SimilarityTransform,
    aggregate_errors,
    align_similarity,
    export_report,
    join_records,
    measure_dimension,
    percent_error,
    read_report,
    read_table,
    select_points,
)
from stereotwin.geometry import rotation_about
from stereotwin.reconstruction import PointCloud


def table_rows():
    with reference_tables_path().open() as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_percent_error_examples():
    assert percent_error(1.125, 1.193) == 6.04
    assert percent_error(2.47, 1.905) == 22.87
    for x in (0.1, 1.0, 29.155):
        assert percent_error(x, x) == 0
    assert percent_error(0, 0) == 0
    with pytest.raises(UndefinedPercentError):
        percent_error(0, 1.5)
    with pytest.raises(StereoTwinError):
        percent_error(-1, 1)


def test_percent_error_is_directed():
    assert percent_error(2.0, 1.0) == 50.0
    assert percent_error(1.0, 2.0) == 100.0


def test_every_printed_cell_reproduces():
    rows = table_rows()
    assert len(rows) == 57
    for r in rows:
        assert abs(percent_error(float(r["actual"]), float(r["measured"])) - float(r["printed_error"])) <= 0.01 + 1e-9, r


def test_aggregate_examples():
    s = aggregate_errors([MeasurementRecord("a", "L", 100, 105)])
    assert (s.mean_percent, s.std_percent, s.count) == (5.0, 0.0, 1)
    s = aggregate_errors([MeasurementRecord("a", "L", 1, 1), MeasurementRecord("a", "W", 1, 1.1)])
    assert s.mean_percent == pytest.approx(5.0) and s.std_percent == pytest.approx(5.0)
    assert s.per_object_mean == {"a": pytest.approx(5.0)}
    with pytest.raises(EmptyInputError):
        aggregate_errors([])


def test_aggregate_over_the_tables():
    records = read_table(reference_tables_path())
    s = aggregate_errors(records)
    cells = [r.percent_error for r in records]
    assert s.mean_percent == pytest.approx(math.fsum(cells) / 57, abs=1e-12)
    assert s.mean_percent == pytest.approx(5.04, abs=0.005)
    assert s.std_percent == pytest.approx(np.std(cells), abs=1e-12)


def test_aggregate_is_permutation_invariant(rng):
    records = read_table(reference_tables_path())
    base = aggregate_errors(records)
    for _ in range(5):
        perm = [records[i] for i in rng.permutation(len(records))]
        s = aggregate_errors(perm)
        assert s.mean_percent == base.mean_percent and s.std_percent == base.std_percent


def test_record_axis_validation():
    with pytest.raises(StereoTwinError):
        MeasurementRecord("a", "X", 1, 1)


def test_align_identity(rng):
    pts = rng.normal(size=(10, 3))
    sim = align_similarity(pts, pts)
    assert sim.scale == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(sim.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(sim.translation, 0, atol=1e-12)


def test_align_constructed_transform(rng):
    src = rng.normal(size=(10, 3))
    rz = rotation_about("z", np.radians(30))
    dst = 2 * src @ rz.T + [1, 2, 3]
    sim = align_similarity(src, dst)
    assert sim.scale == pytest.approx(2.0, abs=1e-9)
    assert np.allclose(sim.rotation, rz, atol=1e-9)
    assert np.allclose(sim.translation, [1, 2, 3], atol=1e-9)
    assert np.sqrt(np.mean(np.sum((sim.apply(src) - dst) ** 2, axis=1))) < 1e-12


def test_align_random_similarities_have_zero_residual(rng):
    for _ in range(20):
        src = rng.normal(size=(8, 3)) * 3
        r, s, t = random_rotation(rng), rng.uniform(0.1, 10), rng.normal(size=3) * 5
        dst = s * src @ r.T + t
        assert np.abs(align_similarity(src, dst).apply(src) - dst).max() < 1e-12 * max(1, np.abs(dst).max()) * 10


def test_align_errors():
    line = np.array([[0, 0, 0], [1, 1, 1], [2, 2, 2]], float)
    with pytest.raises(DegenerateConfigurationError):
        align_similarity(line, line)
    with pytest.raises(InsufficientPointsError):
        align_similarity(line[:2], line[:2])
    with pytest.raises(StereoTwinError):
        align_similarity(line, line[:2])


def test_similarity_roundtrip():
    sim = SimilarityTransform(1.5, rotation_about("x", 0.3), [1, 2, 3])
    again = SimilarityTransform.from_dict(json.loads(json.dumps(sim.to_dict())))
    assert np.array_equal(again.matrix, sim.matrix)


def box_cloud(extents, n=6):
    t = np.linspace(-0.5, 0.5, n)
    g = np.array(np.meshgrid(t, t, t)).reshape(3, -1).T
    return g * np.asarray(extents)


def test_measure_examples():
    ext = (29.155, 2.34375, 20.65625)
    assert measure_dimension(PointCloud(box_cloud(ext))) == pytest.approx(ext, abs=1e-12)
    assert measure_dimension(PointCloud([[1, 2, 3]])) == (0, 0, 0)
    cube = box_cloud((1, 1, 1), 2)
    rotated = cube @ rotation_about("z", np.pi / 4).T + [3, -1, 2]
    sim = align_similarity(rotated, cube)
    assert measure_dimension(PointCloud(sim.apply(rotated))) == pytest.approx((1, 1, 1), abs=1e-9)
    with pytest.raises(EmptyInputError):
        measure_dimension(PointCloud([[1, 2, 3]]), [])


def test_measure_translation_invariant_and_monotone(rng):
    pts = rng.normal(size=(40, 3))
    base = measure_dimension(pts)
    assert measure_dimension(pts + [5, -3, 2]) == pytest.approx(base, abs=1e-12)
    more = np.vstack([pts, rng.normal(size=(1, 3)) * 3])
    assert all(a >= b for a, b in zip(measure_dimension(more), base))


def test_select_points_variants():
    cloud = PointCloud(np.arange(12, dtype=float).reshape(4, 3), pixels=[[0, 0], [5, 5], [10, 2], [3, 9]])
    assert select_points(cloud, [1, 3]).tolist() == [1, 3]
    assert select_points(cloud, {"indices": [2]}).tolist() == [2]
    assert select_points(cloud, {"region": [0, 0, 6, 6]}).tolist() == [0, 1]
    assert select_points(cloud, {"all": True}).tolist() == [0, 1, 2, 3]
    with pytest.raises(StereoTwinError):
        select_points(cloud, [7])
    with pytest.raises(StereoTwinError):
        select_points(PointCloud(cloud.points), {"region": [0, 0, 1, 1]})


def test_export_table_two(tmp_path):
    rows = [r for r in table_rows() if r["section"] == "front"]
    records = [MeasurementRecord(r["object"], r["axis"], float(r["actual"]), float(r["measured"])) for r in rows]
    assert len(records) == 24
    csv_path, json_path = export_report(records, None, tmp_path, {"source": "table"})
    back = read_report(csv_path)
    assert len(back) == 24
    for a, b, r in zip(records, back, rows):
        assert (a.object_name, a.axis, a.actual, a.measured) == (b.object_name, b.axis, b.actual, b.measured)
        assert abs(b.percent_error - float(r["printed_error"])) <= 0.01 + 1e-9
    summary = json.loads(json_path.read_text())
    assert summary["meta"]["std"] == "population"
    assert summary["count"] == 24
    assert set(summary["per_object_errors"]) == {r["object"] for r in rows}


def test_export_empty_and_unwritable(tmp_path):
    with pytest.raises(EmptyInputError):
        export_report([], None, tmp_path)
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(StereoTwinError, match="file"):
        export_report([MeasurementRecord("a", "L", 1, 1)], None, blocker / "sub")


def test_join_records_requires_every_measurement():
    gt = {("a", "L"): 1.0, ("a", "W"): 2.0}
    with pytest.raises(StereoTwinError, match="axis W"):
        join_records(gt, {("a", "L"): 1.0})
    assert [r.axis for r in join_records(gt, {("a", "W"): 2.0, ("a", "L"): 1.1})] == ["L", "W"]
