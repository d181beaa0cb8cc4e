"""Target-to-image size ratios from box annotations.

Input is a JSON array of ``{"image_width", "image_height", "boxes"}`` objects
with boxes given as ``[x, y, w, h]`` in pixels.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

SMALL_AREA = 0.001
LARGE_EXTENT = 0.9


class AnnotationError(ValueError):
    pass


@dataclass
class AnnotationRecord:
    image_width: float
    image_height: float
    boxes: list[tuple[float, float, float, float]]


@dataclass
class BoxRatio:
    w_ratio: float
    h_ratio: float
    box: tuple[float, float]
    image: tuple[float, float]

    @property
    def area(self) -> float:
        return self.w_ratio * self.h_ratio


@dataclass
class StatsReport:
    ratios: list[BoxRatio] = field(default_factory=list)
    skipped: int = 0

    @property
    def smallest(self) -> BoxRatio | None:
        return min(self.ratios, key=lambda r: r.area, default=None)

    @property
    def largest(self) -> BoxRatio | None:
        return max(self.ratios, key=lambda r: r.area, default=None)

    @property
    def n_small(self) -> int:
        return sum(r.area < SMALL_AREA for r in self.ratios)

    @property
    def n_large(self) -> int:
        return sum(max(r.w_ratio, r.h_ratio) > LARGE_EXTENT for r in self.ratios)

    def lines(self) -> list[str]:
        out = [f"boxes: {len(self.ratios)} accepted, {self.skipped} skipped"]
        for label, r in (("min", self.smallest), ("max", self.largest)):
            if r is None:
                continue
            flag = "  (< 0.1%)" if r.area < SMALL_AREA else ""
            out.append(
                f"{label} area proportion: {100 * r.area:.2f}%  "
                f"({_fmt(r.box[0])}x{_fmt(r.box[1])} on {_fmt(r.image[0])}x{_fmt(r.image[1])}){flag}"
            )
        out.append(f"boxes below 0.1% area: {self.n_small}")
        out.append(f"boxes above 90% linear extent: {self.n_large}")
        return out


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:g}"


def _number(v, what):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise AnnotationError(f"{what} must be a number, got {v!r}")
    return float(v)


def parse_annotations(doc) -> list[AnnotationRecord]:
    if not isinstance(doc, list):
        raise AnnotationError("annotation document must be a JSON array")
    records = []
    for i, item in enumerate(doc):
        if not isinstance(item, dict):
            raise AnnotationError(f"record {i} is not an object")
        try:
            width = _number(item["image_width"], f"record {i} image_width")
            height = _number(item["image_height"], f"record {i} image_height")
            raw_boxes = item["boxes"]
        except KeyError as exc:
            raise AnnotationError(f"record {i} lacks field {exc}") from None
        if width <= 0 or height <= 0:
            raise AnnotationError(f"record {i} has non-positive image extent")
        if not isinstance(raw_boxes, list):
            raise AnnotationError(f"record {i} boxes must be an array")
        boxes = []
        for j, b in enumerate(raw_boxes):
            if not isinstance(b, list) or len(b) != 4:
                raise AnnotationError(f"record {i} box {j} must be [x, y, w, h]")
            boxes.append(tuple(_number(v, f"record {i} box {j}") for v in b))
        records.append(AnnotationRecord(width, height, boxes))
    return records


def box_ratios(records) -> StatsReport:
    """Width and height ratios of every box; boxes outside ``[0, 1]`` are skipped."""
    report = StatsReport()
    for rec in records:
        for _, _, bw, bh in rec.boxes:
            wr, hr = bw / rec.image_width, bh / rec.image_height
            if not (0.0 <= wr <= 1.0 and 0.0 <= hr <= 1.0):
                report.skipped += 1
                continue
            report.ratios.append(BoxRatio(wr, hr, (bw, bh), (rec.image_width, rec.image_height)))
    return report


def annotation_stats(path) -> StatsReport:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"malformed JSON: {exc}") from None
    return box_ratios(parse_annotations(doc))


def write_ratio_csv(report: StatsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w_ratio", "h_ratio"])
        for r in report.ratios:
            writer.writerow([f"{r.w_ratio:.9g}", f"{r.h_ratio:.9g}"])
