"""Pipeline configuration: a single JSON file validated up front.

Relative paths in the file resolve against the config file's directory.
Validation loads every referenced asset (masks, overlay) so a bad path fails
before any frame is processed. The config digest covers every field that can
change produced bytes; runtime knobs (parallelism, overwrite) are excluded.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .compositor import OverlayAsset, load_overlay_asset
from .errors import ConfigError
from .geometry import CameraModel, Homography, QuadCorrespondence, estimate_homography
from .imaging import RectROI
from .inpaint import DiffusionParams, MaskRegistry
from .labeler import LabelerProfile
from .labels import PointF
from .evaluate import EvalConfig

MIN_OUT_SIZE = 16


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RoiSpec(_StrictModel):
    x0: int = Field(ge=0)
    y0: int = Field(ge=0)
    width: int = Field(ge=1)
    height: int = Field(ge=1)

    def to_roi(self) -> RectROI:
        return RectROI(self.x0, self.y0, self.width, self.height)


class WarpSpec(_StrictModel):
    src: list[tuple[float, float]] = Field(min_length=4, max_length=4)
    dst: list[tuple[float, float]] = Field(min_length=4, max_length=4)

    def to_quad(self) -> QuadCorrespondence:
        return QuadCorrespondence(
            src=tuple(PointF(*p) for p in self.src),
            dst=tuple(PointF(*p) for p in self.dst),
        )


class InpaintSpec(_StrictModel):
    backend: Literal["builtin", "external"] = "builtin"
    max_iters: int = 2000
    tol: float = 0.05
    command: str | None = None

    @model_validator(mode="after")
    def _check_command(self):
        if self.backend == "external" and not self.command:
            raise ValueError("external inpaint backend requires a command template")
        return self

    def to_params(self) -> DiffusionParams:
        return DiffusionParams(max_iters=self.max_iters, tol=self.tol)


class OverlaySpec(_StrictModel):
    body: str
    mask: str
    feather_radius: int = 3
    prune_occluded: bool = True


class SelectionSpec(_StrictModel):
    roi: RoiSpec | None = None
    min_points_in_roi: int = 3
    daylight_luma_min: float = 60.0
    sample_limit: int | None = None


class CameraSpec(_StrictModel):
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def to_camera(self) -> CameraModel:
        return CameraModel(**self.model_dump())


class ProfileSpec(_StrictModel):
    sdct_window: int = 8
    edge_threshold: float = 0.15
    hough_rho_res: float = 1.0
    hough_theta_res: float = math.pi / 360.0
    theta_min: float = 0.26
    theta_max: float = 1.31
    accumulator_min: int = 120
    anchor_rows: list[float] | None = None
    merge_dist: float = 30.0

    def to_profile(self) -> LabelerProfile:
        data = self.model_dump()
        if data["anchor_rows"] is None:
            del data["anchor_rows"]
        else:
            data["anchor_rows"] = tuple(data["anchor_rows"])
        return LabelerProfile(**data)


class EvalSpec(_StrictModel):
    strip_width: float = 30.0
    iou_threshold: float = 0.5
    frame_w: int = 1640
    frame_h: int = 590

    def to_eval_config(self) -> EvalConfig:
        return EvalConfig(**self.model_dump())


class PipelineConfig(_StrictModel):
    source_root: str
    output_root: str
    label_root: str | None = None
    roi: RoiSpec
    warp: WarpSpec
    out_size: tuple[int, int]
    mask_registry: dict[str, str] = Field(default_factory=dict)
    inpaint: InpaintSpec = Field(default_factory=InpaintSpec)
    overlay: OverlaySpec | None = None
    overwrite: bool = False
    parallelism: int = 1
    selection: SelectionSpec = Field(default_factory=SelectionSpec)
    camera: CameraSpec | None = None
    labeler_profiles: dict[str, ProfileSpec] = Field(default_factory=dict)
    profile_overrides: dict[str, str] = Field(default_factory=dict)
    eval: EvalSpec = Field(default_factory=EvalSpec)

    @model_validator(mode="after")
    def _check(self):
        w, h = self.out_size
        if w < MIN_OUT_SIZE or h < MIN_OUT_SIZE:
            raise ValueError(f"out_size must be at least {MIN_OUT_SIZE}x{MIN_OUT_SIZE}")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        for prefix, name in self.profile_overrides.items():
            if name not in self.labeler_profiles:
                raise ValueError(
                    f"profile override {prefix!r} references unknown profile {name!r}"
                )
        # constructing these validates their invariants early
        self.warp.to_quad()
        self.roi.to_roi()
        for spec in self.labeler_profiles.values():
            spec.to_profile()
        return self

    # -- derived objects -------------------------------------------------

    def homography(self) -> Homography:
        return estimate_homography(self.warp.to_quad())

    def scales(self) -> tuple[float, float]:
        return self.out_size[0] / self.roi.width, self.out_size[1] / self.roi.height

    def load_mask_registry(self) -> MaskRegistry:
        return MaskRegistry.load(self.mask_registry, Path("."), expected_size=tuple(self.out_size))

    def load_overlay(self) -> OverlayAsset | None:
        if self.overlay is None:
            return None
        asset = load_overlay_asset(
            self.overlay.body, self.overlay.mask, self.overlay.feather_radius
        )
        if (asset.body.width, asset.body.height) != tuple(self.out_size):
            raise ConfigError(
                f"overlay asset is {asset.body.width}x{asset.body.height}, "
                f"pipeline output is {self.out_size[0]}x{self.out_size[1]}"
            )
        return asset

    def profile_for(self, rel_path: str) -> tuple[str, LabelerProfile]:
        """Resolve the labeler profile for a frame by longest prefix match."""
        best = None
        for prefix, name in self.profile_overrides.items():
            if rel_path.startswith(prefix) and (best is None or len(prefix) > len(best[0])):
                best = (prefix, name)
        if best is not None:
            return best[1], self.labeler_profiles[best[1]].to_profile()
        if "default" in self.labeler_profiles:
            return "default", self.labeler_profiles["default"].to_profile()
        return "builtin-default", LabelerProfile()

    def digest(self) -> str:
        """Content hash over the semantically meaningful fields."""
        payload = self.model_dump(mode="json", exclude={"parallelism", "overwrite"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _resolve_paths(cfg: PipelineConfig, base_dir: Path) -> PipelineConfig:
    def absolutize(p: str) -> str:
        path = Path(p)
        return str(path if path.is_absolute() else (base_dir / path).resolve())

    data = cfg.model_dump()
    data["source_root"] = absolutize(data["source_root"])
    data["output_root"] = absolutize(data["output_root"])
    if data["label_root"]:
        data["label_root"] = absolutize(data["label_root"])
    data["mask_registry"] = {
        prefix: absolutize(p) for prefix, p in data["mask_registry"].items()
    }
    if data["overlay"]:
        data["overlay"]["body"] = absolutize(data["overlay"]["body"])
        data["overlay"]["mask"] = absolutize(data["overlay"]["mask"])
    return PipelineConfig(**data)


def validate_files(cfg: PipelineConfig) -> None:
    """Fail fast on any referenced file that does not exist."""
    if not Path(cfg.source_root).is_dir():
        raise ConfigError(f"source_root {cfg.source_root} is not a directory")
    if cfg.label_root and not Path(cfg.label_root).is_dir():
        raise ConfigError(f"label_root {cfg.label_root} is not a directory")
    for prefix, mask_path in cfg.mask_registry.items():
        if not Path(mask_path).is_file():
            raise ConfigError(f"mask for prefix {prefix!r} not found: {mask_path}")
    if cfg.overlay is not None:
        for p in (cfg.overlay.body, cfg.overlay.mask):
            if not Path(p).is_file():
                raise ConfigError(f"overlay asset not found: {p}")


def load_config(path: str | Path) -> PipelineConfig:
    """Read, resolve, and validate a pipeline config file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    try:
        cfg = PipelineConfig(**raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    cfg = _resolve_paths(cfg, path.parent.resolve())
    validate_files(cfg)
    return cfg
