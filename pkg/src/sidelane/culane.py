"""CULane dataset layout: per-frame ".lines.txt" label files, split lists, output trees.

Each frame image has a sibling label file named "<stem>.lines.txt" holding one
lane per line as whitespace-separated x y pairs. Split list files carry one
frame per line: the image path, optionally followed by the label path and four
0/1 lane-existence flags. All text is ASCII with LF line endings.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConflictError, ParseError
from .imaging import ImageBuffer, save_image
from .labels import (
    DEFAULT_FRAME_H,
    DEFAULT_FRAME_W,
    LabelSet,
    LaneLabel,
    normalize_points,
)

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")
LINES_SUFFIX = ".lines.txt"

# 9 significant digits keep parse(write(x)) within 1e-4 px at frame scale
# while staying a fixed point under repeated write/parse cycles.
_NUM_FORMAT = "%.9g"


def label_path_for(image_rel: str) -> str:
    """Sibling label path for an image path: strip the image suffix, add .lines.txt."""
    p = Path(image_rel)
    return str(p.with_name(p.stem + LINES_SUFFIX))


def parse_lines_file(
    text: str, frame_w: int = DEFAULT_FRAME_W, frame_h: int = DEFAULT_FRAME_H
) -> LabelSet:
    """Parse a CULane lines file: one lane per non-empty line, (x, y) token pairs.

    Lanes with fewer than two points are dropped with a warning. Point order is
    normalized to strictly decreasing y, duplicate y keeping the first occurrence.
    """
    lanes: list[LaneLabel] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) % 2 != 0:
            raise ParseError(
                f"odd token count ({len(tokens)}), coordinates must come in x y pairs",
                line=lineno,
            )
        values = []
        for tok in tokens:
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"non-numeric token {tok!r}", line=lineno) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite token {tok!r}", line=lineno)
            values.append(v)
        points = list(zip(values[0::2], values[1::2]))
        normalized = normalize_points(points)
        if len(normalized) < 2:
            log.warning("dropping lane with %d usable point(s) at line %d", len(normalized), lineno)
            continue
        lanes.append(LaneLabel(tuple(normalized)))
    return LabelSet(tuple(lanes), frame_w=frame_w, frame_h=frame_h)


def write_lines_file(labels: LabelSet) -> str:
    """Serialize a label set; inverse of :func:`parse_lines_file` up to 1e-4 px."""
    lines = []
    for lane in labels:
        tokens = []
        for p in lane.points:
            tokens.append(_NUM_FORMAT % p.x)
            tokens.append(_NUM_FORMAT % p.y)
        lines.append(" ".join(tokens) + "\n")
    return "".join(lines)


@dataclass(frozen=True)
class FrameRecord:
    """One dataset frame: image path, optional label path, four lane-existence flags."""

    image_path: str
    label_path: str | None = None
    exist_flags: tuple[bool, bool, bool, bool] = (False, False, False, False)


@dataclass
class DatasetIndex:
    """Ordered collection of frames under a root directory."""

    root: Path
    frames: list[FrameRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def image_abspath(self, rec: FrameRecord) -> Path:
        return self.root / rec.image_path

    def label_abspath(self, rec: FrameRecord) -> Path | None:
        return self.root / rec.label_path if rec.label_path else None

    def missing_files(self) -> list[str]:
        """Relative paths referenced by the index that do not exist on disk."""
        missing = []
        for rec in self.frames:
            if not self.image_abspath(rec).is_file():
                missing.append(rec.image_path)
            lbl = self.label_abspath(rec)
            if lbl is not None and not lbl.is_file():
                missing.append(rec.label_path)
        return missing


def parse_list_file(text: str, root: str | Path) -> DatasetIndex:
    """Parse a split list: "img_path [label_path flag flag flag flag]" per line."""
    root = Path(root)
    frames: list[FrameRecord] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        image_path = tokens[0].lstrip("/")
        if len(tokens) == 1:
            frames.append(FrameRecord(image_path=image_path))
            continue
        if len(tokens) != 6:
            raise ParseError(
                f"expected 1 or 6 tokens (image [label f f f f]), got {len(tokens)}",
                line=lineno,
            )
        flags = []
        for tok in tokens[2:]:
            if tok not in ("0", "1"):
                raise ParseError(f"existence flag must be 0 or 1, got {tok!r}", line=lineno)
            flags.append(tok == "1")
        frames.append(
            FrameRecord(
                image_path=image_path,
                label_path=tokens[1].lstrip("/"),
                exist_flags=tuple(flags),
            )
        )
    return DatasetIndex(root=root, frames=frames)


def write_list_file(index: DatasetIndex, with_labels: bool = True) -> str:
    """Serialize an index back to split-list text."""
    lines = []
    for rec in index.frames:
        if with_labels and rec.label_path is not None:
            flags = " ".join("1" if f else "0" for f in rec.exist_flags)
            lines.append(f"{rec.image_path} {rec.label_path} {flags}\n")
        else:
            lines.append(f"{rec.image_path}\n")
    return "".join(lines)


def _exist_flags_for_count(n: int) -> tuple[bool, bool, bool, bool]:
    return tuple(i < n for i in range(4))


def scan_dataset(root: str | Path) -> DatasetIndex:
    """Discover images recursively and pair them with sibling label files.

    Ordering is lexicographic over relative paths, so two scans of the same
    tree are identical.
    """
    root = Path(root)
    if not root.is_dir():
        raise OSError(f"dataset root {root} is not a readable directory")
    frames: list[FrameRecord] = []
    paths = sorted(
        (p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    for p in paths:
        rel = p.relative_to(root).as_posix()
        label_rel = label_path_for(rel)
        if (root / label_rel).is_file():
            text = (root / label_rel).read_text()
            try:
                count = len(parse_lines_file(text))
            except ParseError:
                count = 0
            frames.append(
                FrameRecord(
                    image_path=rel,
                    label_path=label_rel,
                    exist_flags=_exist_flags_for_count(count),
                )
            )
        else:
            frames.append(FrameRecord(image_path=rel))
    return DatasetIndex(root=root, frames=frames)


def validate_index(index: DatasetIndex) -> list[str]:
    """Check referenced files and exist-flag consistency; mismatches are warnings.

    Returns human-readable warning strings (also logged), never raises for
    content problems: tolerant ingestion is required for hand-fixed label sets.
    """
    warnings: list[str] = []
    for rec in index.frames:
        if not index.image_abspath(rec).is_file():
            warnings.append(f"missing image: {rec.image_path}")
            continue
        lbl = index.label_abspath(rec)
        if lbl is None:
            continue
        if not lbl.is_file():
            warnings.append(f"missing label file: {rec.label_path}")
            continue
        try:
            count = len(parse_lines_file(lbl.read_text()))
        except ParseError as exc:
            warnings.append(f"unparseable label file {rec.label_path}: {exc}")
            continue
        flagged = sum(rec.exist_flags)
        if flagged != count:
            warnings.append(
                f"exist-flag mismatch for {rec.image_path}: flags say {flagged}, file has {count}"
            )
    for w in warnings:
        log.warning("%s", w)
    return warnings


def write_augmented_frame(
    out_root: str | Path,
    rel_path: str,
    img: ImageBuffer,
    labels: LabelSet,
    overwrite: bool = False,
) -> None:
    """Write one output frame and its sibling lines file, creating directories.

    An empty label set still produces a zero-length lines file so the frame is
    kept as a negative sample.
    """
    out_root = Path(out_root)
    img_path = out_root / rel_path
    if img_path.suffix.lower() not in IMAGE_SUFFIXES:
        raise ValueError(f"output path {rel_path!r} lacks an image extension")
    label_path = out_root / label_path_for(rel_path)
    if not overwrite:
        for target in (img_path, label_path):
            if target.exists():
                raise ConflictError(f"{target} already exists (overwrite disabled)")
    img_path.parent.mkdir(parents=True, exist_ok=True)
    save_image(img, img_path)
    label_path.write_text(write_lines_file(labels))
