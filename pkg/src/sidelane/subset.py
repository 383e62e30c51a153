"""Source-frame selection: keep daytime frames with lane markings visible in the ROI.

The day/night decision uses mean luma over the top band of the frame (sky);
ROI visibility asks for a minimum number of labeled lane points strictly
inside the configured rectangle. Both thresholds are configuration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .culane import DatasetIndex, FrameRecord, parse_lines_file
from .errors import ParseError
from .imaging import ImageBuffer, RectROI, load_image, to_grayscale
from .labels import LabelSet

log = logging.getLogger(__name__)

SKY_BAND_FRACTION = 0.4


@dataclass(frozen=True)
class SelectionCriteria:
    roi: RectROI
    min_points_in_roi: int = 3
    daylight_luma_min: float = 60.0
    sample_limit: int | None = None

    def __post_init__(self):
        if self.min_points_in_roi < 1:
            raise ValueError("min_points_in_roi must be at least 1")
        if not 0 <= self.daylight_luma_min <= 255:
            raise ValueError("daylight_luma_min must be within [0, 255]")
        if self.sample_limit is not None and self.sample_limit < 0:
            raise ValueError("sample_limit must be non-negative")


@dataclass
class SelectionReport:
    kept: int = 0
    dark: int = 0
    out_of_roi: int = 0
    unlabeled: int = 0
    truncated: int = 0

    def as_dict(self) -> dict:
        return {
            "kept": self.kept,
            "dark": self.dark,
            "out_of_roi": self.out_of_roi,
            "unlabeled": self.unlabeled,
            "truncated": self.truncated,
        }


def roi_visibility(labels: LabelSet, roi: RectROI, min_points: int) -> bool:
    """True iff at least one lane has >= min_points points strictly inside the ROI."""
    x_lo, x_hi = roi.x0, roi.x0 + roi.width
    y_lo, y_hi = roi.y0, roi.y0 + roi.height
    for lane in labels:
        inside = sum(
            1 for p in lane.points if x_lo < p.x < x_hi and y_lo < p.y < y_hi
        )
        if inside >= min_points:
            return True
    return False


def daylight_score(img: ImageBuffer) -> float:
    """Mean luma over the top 40% of rows, the sky band."""
    gray = img if img.channels == 1 else to_grayscale(img)
    band_rows = max(1, int(round(SKY_BAND_FRACTION * gray.height)))
    band = gray.pixels[:band_rows, :, 0]
    return float(np.mean(band.astype(np.float64)))


def default_roi_for(frame_w: int, frame_h: int) -> RectROI:
    """Lower-left quadrant: x in [0, 0.5 W), y in [0.55 H, H)."""
    y0 = int(round(0.55 * frame_h))
    return RectROI(0, y0, max(1, frame_w // 2), max(1, frame_h - y0))


def select_subset(
    index: DatasetIndex, criteria: SelectionCriteria
) -> tuple[DatasetIndex, SelectionReport]:
    """Filter the index by daylight and ROI visibility, preserving order.

    Frames without a usable label file count as "unlabeled"; dark frames are
    counted before the ROI test so each rejection has a single reason.
    """
    report = SelectionReport()
    kept: list[FrameRecord] = []
    for rec in index.frames:
        label_path = index.label_abspath(rec)
        if label_path is None or not label_path.is_file():
            report.unlabeled += 1
            continue
        try:
            labels = parse_lines_file(label_path.read_text())
        except ParseError as exc:
            log.warning("unparseable label file %s: %s", rec.label_path, exc)
            report.unlabeled += 1
            continue
        img = load_image(index.image_abspath(rec))
        if daylight_score(img) < criteria.daylight_luma_min:
            report.dark += 1
            continue
        if not roi_visibility(labels, criteria.roi, criteria.min_points_in_roi):
            report.out_of_roi += 1
            continue
        kept.append(rec)
    if criteria.sample_limit is not None and len(kept) > criteria.sample_limit:
        report.truncated = len(kept) - criteria.sample_limit
        kept = kept[: criteria.sample_limit]
    report.kept = len(kept)
    return DatasetIndex(root=index.root, frames=kept), report
