"""Batch orchestration: subset selection, augmentation, labeling, evaluation.

Each run is driven by one validated :class:`~sidelane.config.PipelineConfig`
and produces a manifest. Frames are independent, so failures are recorded per
frame and never abort the batch; workers own disjoint frames and the manifest
is assembled in input order, which makes runs byte-reproducible at any
parallelism level.
"""

from __future__ import annotations

import json
import logging
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .compositor import OverlayAsset, occlusion_consistency, overlay_blend
from .config import PipelineConfig
from .culane import (
    DatasetIndex,
    label_path_for,
    parse_lines_file,
    scan_dataset,
    write_augmented_frame,
    write_lines_file,
    write_list_file,
)
from .evaluate import EvalReport, evaluate_dataset
from .geometry import Homography, transform_labels, warp_image
from .imaging import ImageBuffer, crop, load_image, resize_bilinear, save_image
from .inpaint import MaskRegistry, diffusion_inpaint, external_inpaint
from .labeler import label_frame
from .labels import LabelSet
from .manifest import FrameOutcome, ProgressJournal, RunManifest, utc_now
from .review import ReviewStore, tree_lock
from .subset import SelectionCriteria, default_roi_for, select_subset

log = logging.getLogger(__name__)

_WORKER_CTX: dict = {}


@dataclass
class AugmentContext:
    cfg: PipelineConfig
    homography: Homography
    registry: MaskRegistry
    overlay: OverlayAsset | None

    @classmethod
    def from_config(cls, cfg: PipelineConfig) -> "AugmentContext":
        return cls(
            cfg=cfg,
            homography=cfg.homography(),
            registry=cfg.load_mask_registry(),
            overlay=cfg.load_overlay(),
        )


def augment_frame(ctx: AugmentContext, rel_image: str, rel_label: str | None) -> FrameOutcome:
    """Run one frame through crop, warp, resize, inpaint, overlay, and write it out."""
    cfg = ctx.cfg
    outcome = FrameOutcome(input=rel_image)
    stages = outcome.stages
    current = "load"
    try:
        roi = cfg.roi.to_roi()
        out_w, out_h = cfg.out_size
        scale_x, scale_y = cfg.scales()

        img = load_image(Path(cfg.source_root) / rel_image)
        current = "crop"
        work = crop(img, roi)
        stages["crop"] = "ok"
        current = "warp"
        work = warp_image(work, ctx.homography, roi.width, roi.height)
        stages["warp"] = "ok"
        current = "resize"
        work = resize_bilinear(work, out_w, out_h)
        stages["resize"] = "ok"

        current = "inpaint"
        mask = ctx.registry.resolve(rel_image)
        if mask is None:
            stages["inpaint"] = "skipped"
        elif cfg.inpaint.backend == "builtin":
            work = diffusion_inpaint(work, mask, cfg.inpaint.to_params())
            stages["inpaint"] = "ok"
        else:
            work = _external_inpaint_buffer(
                work, ctx.registry.resolve_path(rel_image), cfg.inpaint.command
            )
            stages["inpaint"] = "ok"

        current = "labels"
        labels = LabelSet((), frame_w=out_w, frame_h=out_h)
        if rel_label is not None:
            label_file = Path(cfg.source_root) / rel_label
            if label_file.is_file():
                labels = parse_lines_file(label_file.read_text())
        outcome.lanes_in = len(labels)
        labels = transform_labels(labels, roi, ctx.homography, scale_x, scale_y)

        current = "overlay"
        if ctx.overlay is not None:
            work = overlay_blend(work, ctx.overlay)
            stages["overlay"] = "ok"
            if cfg.overlay.prune_occluded:
                labels = occlusion_consistency(labels, ctx.overlay)
        else:
            stages["overlay"] = "skipped"
        outcome.lanes_out = len(labels)

        current = "write"
        write_augmented_frame(cfg.output_root, rel_image, work, labels, overwrite=cfg.overwrite)
        outcome.output = rel_image
    except Exception as exc:  # per-frame isolation: one bad frame must not kill the batch
        outcome.error = f"{type(exc).__name__}: {exc}"
        stages[current] = "failed"
    return outcome


def _external_inpaint_buffer(img: ImageBuffer, mask_path: str | None, cmd: str) -> ImageBuffer:
    if mask_path is None:
        return img
    with tempfile.TemporaryDirectory(prefix="sidelane-aug-") as tmp:
        img_path = Path(tmp) / "frame.png"
        save_image(img, img_path)
        return external_inpaint(img_path, mask_path, cmd)


def _init_augment_worker(cfg_payload: str) -> None:
    cfg = PipelineConfig(**json.loads(cfg_payload))
    _WORKER_CTX["augment"] = AugmentContext.from_config(cfg)


def _augment_worker(item: tuple[str, str | None]) -> FrameOutcome:
    return augment_frame(_WORKER_CTX["augment"], item[0], item[1])


def run_augment(
    cfg: PipelineConfig,
    index: DatasetIndex | None = None,
    jobs: int | None = None,
    resume: bool = False,
) -> RunManifest:
    """Augment every indexed frame; returns the manifest (also written to disk)."""
    if index is None:
        index = scan_dataset(cfg.source_root)
    jobs = jobs or cfg.parallelism
    out_root = Path(cfg.output_root)
    out_root.mkdir(parents=True, exist_ok=True)
    manifest_path = out_root / "manifest.json"
    journal = ProgressJournal(manifest_path)
    already = journal.completed() if resume else {}
    if not resume:
        journal.clear()

    manifest = RunManifest(
        command="augment",
        tool_version=__version__,
        config_digest=cfg.digest(),
        started=utc_now(),
    )
    items: list[tuple[str, str | None]] = []
    reused: dict[str, FrameOutcome] = {}
    for rec in index.frames:
        prior = already.get(rec.image_path)
        if prior is not None and (out_root / prior.output).is_file():
            reused[rec.image_path] = prior
        else:
            items.append((rec.image_path, rec.label_path))

    results: dict[str, FrameOutcome] = dict(reused)
    if jobs <= 1:
        ctx = AugmentContext.from_config(cfg)
        for item in items:
            outcome = augment_frame(ctx, item[0], item[1])
            journal.append(outcome)
            results[outcome.input] = outcome
    else:
        payload = json.dumps(cfg.model_dump(mode="json"))
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_augment_worker, initargs=(payload,)
        ) as pool:
            for outcome in pool.map(_augment_worker, items):
                journal.append(outcome)
                results[outcome.input] = outcome

    manifest.frames = [results[rec.image_path] for rec in index.frames]
    manifest.finished = utc_now()
    manifest.save(manifest_path)
    journal.clear()
    counts = manifest.counts()
    log.info("augment finished: %(ok)d ok, %(failed)d failed of %(total)d", counts)
    return manifest


# -- labeling ---------------------------------------------------------------


def _label_one(cfg: PipelineConfig, rel_image: str) -> FrameOutcome:
    outcome = FrameOutcome(input=rel_image)
    try:
        name, profile = cfg.profile_for(rel_image)
        outcome.profile = name
        cam = cfg.camera.to_camera() if cfg.camera else None
        img = load_image(Path(cfg.label_root) / rel_image)
        labels = label_frame(img, cam, profile)
        rel_label = label_path_for(rel_image)
        target = Path(cfg.label_root) / rel_label
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(write_lines_file(labels))
        outcome.output = rel_label
        outcome.lanes_out = len(labels)
        outcome.stages["label"] = "ok"
    except Exception as exc:
        outcome.error = f"{type(exc).__name__}: {exc}"
        outcome.stages["label"] = "failed"
    return outcome


def _init_label_worker(cfg_payload: str) -> None:
    _WORKER_CTX["label_cfg"] = PipelineConfig(**json.loads(cfg_payload))


def _label_worker(rel_image: str) -> FrameOutcome:
    return _label_one(_WORKER_CTX["label_cfg"], rel_image)


def run_label(
    cfg: PipelineConfig, jobs: int | None = None, index: DatasetIndex | None = None
) -> RunManifest:
    """Label every frame under label_root that is not already accepted."""
    if not cfg.label_root:
        raise ValueError("config has no label_root; labeling needs a target-frame tree")
    jobs = jobs or cfg.parallelism
    root = Path(cfg.label_root)
    if index is None:
        index = scan_dataset(root)
    store = ReviewStore(root)
    manifest = RunManifest(
        command="label",
        tool_version=__version__,
        config_digest=cfg.digest(),
        started=utc_now(),
    )
    with tree_lock(root, "label-batch"):
        todo: list[str] = []
        skipped: dict[str, FrameOutcome] = {}
        for rec in index.frames:
            if store.status(rec.image_path) == "accepted":
                skipped[rec.image_path] = FrameOutcome(
                    input=rec.image_path,
                    output=rec.label_path,
                    stages={"label": "skipped-accepted"},
                )
            else:
                todo.append(rec.image_path)

        results: dict[str, FrameOutcome] = dict(skipped)
        if jobs <= 1:
            for rel in todo:
                results[rel] = _label_one(cfg, rel)
        else:
            payload = json.dumps(cfg.model_dump(mode="json"))
            with ProcessPoolExecutor(
                max_workers=jobs, initializer=_init_label_worker, initargs=(payload,)
            ) as pool:
                for outcome in pool.map(_label_worker, todo):
                    results[outcome.input] = outcome

        for rel, outcome in results.items():
            if outcome.ok and "skipped" not in outcome.stages.get("label", ""):
                store.set_status(rel, "pending")

    manifest.frames = [results[rec.image_path] for rec in index.frames]
    manifest.finished = utc_now()
    manifest.save(root / ".review" / "manifest.json")
    return manifest


# -- selection ----------------------------------------------------------------


def run_select(
    cfg: PipelineConfig,
    list_out: str | Path | None = None,
    report_out: str | Path | None = None,
) -> tuple[DatasetIndex, dict]:
    """Filter the source dataset and write the split list plus a JSON report."""
    index = scan_dataset(cfg.source_root)
    sel = cfg.selection
    if sel.roi is not None:
        roi = sel.roi.to_roi()
    else:
        if not index.frames:
            raise ValueError("source dataset is empty; cannot derive a default ROI")
        first = load_image(index.image_abspath(index.frames[0]))
        roi = default_roi_for(first.width, first.height)
    criteria = SelectionCriteria(
        roi=roi,
        min_points_in_roi=sel.min_points_in_roi,
        daylight_luma_min=sel.daylight_luma_min,
        sample_limit=sel.sample_limit,
    )
    selected, report = select_subset(index, criteria)

    out_root = Path(cfg.output_root)
    out_root.mkdir(parents=True, exist_ok=True)
    list_path = Path(list_out) if list_out else out_root / "selected.txt"
    report_path = Path(report_out) if report_out else out_root / "selection_report.json"
    list_path.parent.mkdir(parents=True, exist_ok=True)
    list_path.write_text(write_list_file(selected))
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    return selected, report.as_dict()


# -- evaluation ---------------------------------------------------------------


def run_eval(cfg: PipelineConfig, pred_root: str | Path, gt_root: str | Path) -> EvalReport:
    """Score predictions against ground truth and write JSON plus text reports."""
    gt_index = scan_dataset(gt_root)
    report = evaluate_dataset(pred_root, gt_index, cfg.eval.to_eval_config())
    out_root = Path(cfg.output_root)
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "eval_report.json").write_text(report.to_json())
    (out_root / "eval_report.txt").write_text(report.to_text())
    return report
