import csv
import json
from pathlib import Path

import pytest

from drpn.annotations import (
    AnnotationError,
    annotation_stats,
    box_ratios,
    parse_annotations,
    write_ratio_csv,
)

FIXTURE = Path(__file__).parent / "data" / "extreme_boxes.json"


def stats_for(tmp_path, doc):
    path = tmp_path / "ann.json"
    path.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return annotation_stats(path)


def test_smallest_box(tmp_path):
    report = stats_for(tmp_path, [{"image_width": 300, "image_height": 300, "boxes": [[0, 0, 9, 5]]}])
    assert report.smallest.area == pytest.approx(45 / 90000)
    assert report.n_small == 1
    assert "min area proportion: 0.05%  (9x5 on 300x300)  (< 0.1%)" in report.lines()


def test_largest_box(tmp_path):
    report = stats_for(tmp_path, [{"image_width": 300, "image_height": 300, "boxes": [[0, 0, 296, 292]]}])
    assert report.largest.area == pytest.approx(296 * 292 / 90000)
    assert 100 * report.largest.area == pytest.approx(96.0, abs=0.05)
    assert report.n_large == 1 and report.n_small == 0
    assert any(line.startswith("max area proportion: 96.04%") for line in report.lines())


def test_fixture_endpoints():
    lines = annotation_stats(FIXTURE).lines()
    assert any("0.05%" in l and "(< 0.1%)" in l for l in lines)
    assert any("96.04%" in l and "296x292" in l for l in lines)


def test_empty_box_list(tmp_path):
    report = stats_for(tmp_path, [{"image_width": 10, "image_height": 10, "boxes": []}])
    assert report.ratios == [] and report.n_small == 0 and report.n_large == 0
    out = tmp_path / "r.csv"
    write_ratio_csv(report, out)
    assert out.read_text().splitlines() == ["w_ratio,h_ratio"]


def test_out_of_range_skipped(tmp_path):
    report = stats_for(
        tmp_path, [{"image_width": 100, "image_height": 50, "boxes": [[0, 0, 120, 10], [0, 0, 10, 10]]}]
    )
    assert report.skipped == 1 and len(report.ratios) == 1
    assert "boxes: 1 accepted, 1 skipped" in report.lines()


def test_csv_rows(tmp_path):
    report = annotation_stats(FIXTURE)
    out = tmp_path / "r.csv"
    write_ratio_csv(report, out)
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["w_ratio", "h_ratio"]
    assert len(rows) - 1 == len(report.ratios) == 2
    assert all(0 <= float(v) <= 1 for row in rows[1:] for v in row)
    assert float(rows[1][0]) == pytest.approx(0.03)


@pytest.mark.parametrize(
    "doc,match",
    [
        ("[{", "malformed"),
        ({"image_width": 1}, "array"),
        ([3], "not an object"),
        ([{"image_width": 1, "boxes": []}], "lacks"),
        ([{"image_width": "1", "image_height": 1, "boxes": []}], "number"),
        ([{"image_width": 0, "image_height": 1, "boxes": []}], "non-positive"),
        ([{"image_width": 1, "image_height": 1, "boxes": [[1, 2, 3]]}], r"\[x, y, w, h\]"),
        ([{"image_width": 1, "image_height": 1, "boxes": {}}], "array"),
    ],
)
def test_malformed(tmp_path, doc, match):
    with pytest.raises(AnnotationError, match=match):
        stats_for(tmp_path, doc)


def test_ratios_without_files():
    report = box_ratios(parse_annotations([{"image_width": 4, "image_height": 8, "boxes": [[0, 0, 2, 2]]}]))
    (r,) = report.ratios
    assert (r.w_ratio, r.h_ratio) == (0.5, 0.25)
