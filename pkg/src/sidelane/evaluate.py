"""CULane-protocol scoring: strip rasterization, IoU matching, precision/recall/F1.

Each lane is rendered as a fixed-width strip (30 px by default); predictions
and ground truth match one-to-one greedily by descending IoU above the 0.5
threshold. Matched pairs are true positives, leftover predictions false
positives, leftover ground-truth lanes false negatives.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .culane import DatasetIndex, label_path_for, parse_lines_file
from .errors import ParseError
from .imaging import BinaryMask
from .labels import LabelSet, LaneLabel

log = logging.getLogger(__name__)

STAMP_STEP = 0.5  # px between disc stamps along a segment


@dataclass(frozen=True)
class EvalConfig:
    strip_width: float = 30.0
    iou_threshold: float = 0.5
    frame_w: int = 1640
    frame_h: int = 590

    def __post_init__(self):
        if self.strip_width < 1:
            raise ValueError("strip_width must be at least 1")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must be in (0, 1]")
        if self.frame_w < 1 or self.frame_h < 1:
            raise ValueError("frame dimensions must be positive")


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = f1_score(precision, recall)
    return precision, recall, f1


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class EvalReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    per_frame: list[tuple[str, int, int, int]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @classmethod
    def from_counts(
        cls,
        tp: int,
        fp: int,
        fn: int,
        per_frame: list[tuple[str, int, int, int]] | None = None,
        warnings: list[str] | None = None,
    ) -> "EvalReport":
        p, r, f1 = precision_recall_f1(tp, fp, fn)
        return cls(
            tp=tp,
            fp=fp,
            fn=fn,
            precision=p,
            recall=r,
            f1=f1,
            per_frame=per_frame or [],
            warnings=warnings or [],
        )

    def to_json(self) -> str:
        payload = {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "warnings": self.warnings,
            "per_frame": [
                {"frame": f, "tp": tp, "fp": fp, "fn": fn}
                for f, tp, fp, fn in self.per_frame
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"{'frame':<60} {'tp':>4} {'fp':>4} {'fn':>4}",
            "-" * 76,
        ]
        for f, tp, fp, fn in self.per_frame:
            lines.append(f"{f:<60} {tp:>4} {fp:>4} {fn:>4}")
        lines.append("-" * 76)
        lines.append(f"{'total':<60} {self.tp:>4} {self.fp:>4} {self.fn:>4}")
        lines.append("")
        lines.append(f"precision: {self.precision:.5f}")
        lines.append(f"recall:    {self.recall:.5f}")
        lines.append(f"f1:        {self.f1:.5f}")
        if self.warnings:
            lines.append("")
            lines.append("warnings:")
            lines.extend(f"  {w}" for w in self.warnings)
        return "\n".join(lines) + "\n"


def rasterize_lane(lane: LaneLabel, cfg: EvalConfig) -> BinaryMask:
    """Render a lane as a strip of the configured width, clipped to the frame.

    Segments are drawn by stamping a disc of diameter strip_width along each
    segment at steps of at most half a pixel, which approximates round caps
    and joins.
    """
    radius = cfg.strip_width / 2.0
    pts = lane.as_array()

    samples: list[np.ndarray] = []
    for a, b in zip(pts[:-1], pts[1:]):
        seg_len = float(np.hypot(*(b - a)))
        n = max(1, int(math.ceil(seg_len / STAMP_STEP)))
        t = np.linspace(0.0, 1.0, n + 1)[:, None]
        samples.append(a[None, :] + t * (b - a)[None, :])
    centers = np.concatenate(samples, axis=0)

    # skip stamps that cannot touch the frame
    near = (
        (centers[:, 0] >= -radius - 1)
        & (centers[:, 0] <= cfg.frame_w - 1 + radius + 1)
        & (centers[:, 1] >= -radius - 1)
        & (centers[:, 1] <= cfg.frame_h - 1 + radius + 1)
    )
    centers = centers[near]
    bits = np.zeros((cfg.frame_h, cfg.frame_w), dtype=bool)
    if centers.shape[0] == 0:
        return BinaryMask(bits)

    reach = int(math.ceil(radius))
    offs = np.arange(-reach, reach + 2)
    ox, oy = np.meshgrid(offs, offs)
    offsets = np.stack([ox.ravel(), oy.ravel()], axis=1)  # (k, 2)

    base = np.floor(centers).astype(np.int64)  # (m, 2)
    r2 = radius * radius
    for chunk_start in range(0, base.shape[0], 2048):
        cbase = base[chunk_start : chunk_start + 2048]
        cc = centers[chunk_start : chunk_start + 2048]
        px = cbase[:, None, 0] + offsets[None, :, 0]
        py = cbase[:, None, 1] + offsets[None, :, 1]
        dx = px - cc[:, None, 0]
        dy = py - cc[:, None, 1]
        hit = (dx * dx + dy * dy) <= r2
        hit &= (px >= 0) & (px < cfg.frame_w) & (py >= 0) & (py < cfg.frame_h)
        bits[py[hit], px[hit]] = True
    return BinaryMask(bits)


def lane_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two strip masks; 0 when the union is empty."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = int(np.count_nonzero(a.bits | b.bits))
    return inter / union if union > 0 else 0.0


def greedy_match(iou: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """One-to-one matching by repeatedly taking the highest-IoU pair >= threshold.

    Ties resolve to the smallest (row, column) pair, which is what argmax over
    the row-major matrix yields.
    """
    m = np.array(iou, dtype=np.float64, copy=True)
    pairs: list[tuple[int, int]] = []
    while m.size:
        flat = int(np.argmax(m))
        i, j = divmod(flat, m.shape[1])
        if m[i, j] < threshold:
            break
        pairs.append((i, j))
        m[i, :] = -1.0
        m[:, j] = -1.0
    return pairs


def match_lanes(
    preds: LabelSet, gts: LabelSet, cfg: EvalConfig
) -> tuple[int, int, int, list[tuple[int, int]]]:
    """Score one frame: returns (tp, fp, fn, matched index pairs)."""
    pred_masks = [rasterize_lane(lane, cfg) for lane in preds]
    gt_masks = [rasterize_lane(lane, cfg) for lane in gts]
    iou = np.zeros((len(pred_masks), len(gt_masks)), dtype=np.float64)
    for i, pm in enumerate(pred_masks):
        for j, gm in enumerate(gt_masks):
            iou[i, j] = lane_iou(pm, gm)
    pairs = greedy_match(iou, cfg.iou_threshold)
    tp = len(pairs)
    return tp, len(pred_masks) - tp, len(gt_masks) - tp, pairs


def _read_labels(path: Path, cfg: EvalConfig) -> LabelSet:
    return parse_lines_file(path.read_text(), frame_w=cfg.frame_w, frame_h=cfg.frame_h)


def evaluate_dataset(
    pred_root: str | Path, gt_index: DatasetIndex, cfg: EvalConfig = EvalConfig()
) -> EvalReport:
    """Score every ground-truth frame against its mirrored prediction file.

    Prediction files live under pred_root at the same relative paths as the
    ground-truth label files. A missing or unparseable prediction scores as an
    empty prediction and is recorded as a warning, so partial model runs still
    evaluate end to end.
    """
    pred_root = Path(pred_root)
    empty = LabelSet((), frame_w=cfg.frame_w, frame_h=cfg.frame_h)
    total_tp = total_fp = total_fn = 0
    per_frame: list[tuple[str, int, int, int]] = []
    warnings: list[str] = []
    for rec in gt_index.frames:
        label_rel = rec.label_path or label_path_for(rec.image_path)
        gt_path = gt_index.root / label_rel
        try:
            gts = _read_labels(gt_path, cfg)
        except (OSError, ParseError) as exc:
            warnings.append(f"unusable ground truth {label_rel}: {exc}")
            gts = empty
        pred_path = pred_root / label_rel
        if not pred_path.is_file():
            warnings.append(f"missing prediction {label_rel}")
            preds = empty
        else:
            try:
                preds = _read_labels(pred_path, cfg)
            except ParseError as exc:
                warnings.append(f"unparseable prediction {label_rel}: {exc}")
                preds = empty
        tp, fp, fn, _ = match_lanes(preds, gts, cfg)
        total_tp += tp
        total_fp += fp
        total_fn += fn
        per_frame.append((rec.image_path, tp, fp, fn))
    return EvalReport.from_counts(
        total_tp, total_fp, total_fn, per_frame=per_frame, warnings=warnings
    )
