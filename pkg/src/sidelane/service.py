"""Local review service: inspect, edit, re-run, and accept semi-automatic labels.

Serves the labeled tree over a small HTTP API (localhost by default). Every
label mutation is written straight through to the lines file on disk and
journaled, so the browser client can stay stateless. Coordinates in request
and response bodies are in the 1640x590 CULane frame space.
"""

from __future__ import annotations

import io
import threading
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from .config import PipelineConfig
from .culane import label_path_for, parse_lines_file, write_lines_file
from .errors import ConfigError, ParseError
from .imaging import ImageBuffer, load_image
from .labeler import LabelerProfile, label_frame_artifacts
from .labels import DEFAULT_FRAME_H, DEFAULT_FRAME_W, LabelSet, LaneLabel, normalize_points
from .review import ReviewStore, labels_digest, tree_lock

FRONTEND_DIST = Path(__file__).resolve().parents[2] / "frontend" / "dist"


class FrameInfo(BaseModel):
    id: int
    path: str
    status: Literal["pending", "accepted", "rejected"]
    lane_count: int
    digest: str


class LabelsPayload(BaseModel):
    id: int
    path: str
    status: str
    digest: str
    lanes: list[list[tuple[float, float]]]


class PutLabelsRequest(BaseModel):
    lanes: list[list[tuple[float, float]]] = Field(max_length=4)
    base_digest: str | None = None


class RelabelRequest(BaseModel):
    overrides: dict = Field(default_factory=dict)


class StatusRequest(BaseModel):
    status: Literal["pending", "accepted", "rejected"]


class ExportRequest(BaseModel):
    out_path: str | None = None


class ExportResponse(BaseModel):
    list_path: str
    count: int
    frames: list[str]


def _png_bytes(img: ImageBuffer) -> bytes:
    arr = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


class _Frames:
    """Frame list and label file access for one labeled tree."""

    def __init__(self, root: Path, cfg: PipelineConfig | None):
        self.root = root
        self.cfg = cfg
        suffixes = (".jpg", ".jpeg", ".png")
        self.paths = sorted(
            p.relative_to(root).as_posix()
            for p in root.rglob("*")
            if p.is_file() and p.suffix.lower() in suffixes
        )
        self.store = ReviewStore(root)
        self.write_lock = threading.Lock()

    def rel(self, fid: int) -> str:
        if not 0 <= fid < len(self.paths):
            raise HTTPException(status_code=404, detail=f"no frame with id {fid}")
        return self.paths[fid]

    def label_file(self, rel: str) -> Path:
        return self.root / label_path_for(rel)

    def read_labels(self, rel: str) -> tuple[LabelSet, str]:
        path = self.label_file(rel)
        if not path.is_file():
            return LabelSet(()), labels_digest("")
        text = path.read_text()
        try:
            return parse_lines_file(text), labels_digest(text)
        except ParseError as exc:
            raise HTTPException(status_code=500, detail=f"stored labels unreadable: {exc}")

    def write_labels(self, rel: str, labels: LabelSet, before_digest: str) -> str:
        text = write_lines_file(labels)
        path = self.label_file(rel)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        after = labels_digest(text)
        self.store.record_edit(rel, before_digest, after)
        return after

    def profile_for(self, rel: str) -> LabelerProfile:
        if self.cfg is not None:
            return self.cfg.profile_for(rel)[1]
        return LabelerProfile()

    def camera(self):
        return self.cfg.camera.to_camera() if self.cfg and self.cfg.camera else None


def create_app(label_root: str | Path, cfg: PipelineConfig | None = None) -> FastAPI:
    """Build the review app for a labeled tree produced by a labeling run."""
    root = Path(label_root)
    if not root.is_dir():
        raise ConfigError(f"label root {root} is not a directory")
    if not (root / ".review" / "manifest.json").is_file():
        raise ConfigError(
            f"{root} has no .review/manifest.json; run the labeling batch first"
        )

    frames = _Frames(root, cfg)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        with tree_lock(root, "review-service"):
            yield

    app = FastAPI(title="sidelane review", lifespan=lifespan)
    app.state.frames = frames

    def frame_info(fid: int) -> FrameInfo:
        rel = frames.rel(fid)
        labels, digest = frames.read_labels(rel)
        return FrameInfo(
            id=fid,
            path=rel,
            status=frames.store.status(rel),
            lane_count=len(labels),
            digest=digest,
        )

    @app.get("/api/frames", response_model=list[FrameInfo])
    def list_frames():
        return [frame_info(i) for i in range(len(frames.paths))]

    @app.get("/api/frames/{fid}/image")
    def frame_image(fid: int):
        rel = frames.rel(fid)
        try:
            img = load_image(frames.root / rel)
        except OSError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return Response(content=_png_bytes(img), media_type="image/png")

    @app.get("/api/frames/{fid}/edges")
    def frame_edges(fid: int):
        rel = frames.rel(fid)
        img = load_image(frames.root / rel)
        artifacts = label_frame_artifacts(img, frames.camera(), frames.profile_for(rel))
        return Response(
            content=_png_bytes(artifacts.edges.to_image()), media_type="image/png"
        )

    @app.get("/api/frames/{fid}/labels", response_model=LabelsPayload)
    def get_labels(fid: int):
        rel = frames.rel(fid)
        labels, digest = frames.read_labels(rel)
        return LabelsPayload(
            id=fid,
            path=rel,
            status=frames.store.status(rel),
            digest=digest,
            lanes=[[(p.x, p.y) for p in lane.points] for lane in labels],
        )

    @app.put("/api/frames/{fid}/labels", response_model=LabelsPayload)
    def put_labels(fid: int, body: PutLabelsRequest):
        rel = frames.rel(fid)
        try:
            lanes = tuple(
                LaneLabel(tuple(normalize_points(lane))) for lane in body.lanes if lane
            )
            labels = LabelSet(lanes, frame_w=DEFAULT_FRAME_W, frame_h=DEFAULT_FRAME_H)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        with frames.write_lock:
            _, current = frames.read_labels(rel)
            if body.base_digest is not None and body.base_digest != current:
                raise HTTPException(
                    status_code=409,
                    detail=f"stale edit: frame changed (digest {current})",
                )
            frames.write_labels(rel, labels, current)
        return get_labels(fid)

    @app.post("/api/frames/{fid}/relabel", response_model=LabelsPayload)
    def relabel(fid: int, body: RelabelRequest):
        rel = frames.rel(fid)
        base = frames.profile_for(rel)
        try:
            overrides = dict(body.overrides)
            if "anchor_rows" in overrides:
                overrides["anchor_rows"] = tuple(overrides["anchor_rows"])
            profile = base.merged(**overrides)
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad profile override: {exc}")
        img = load_image(frames.root / rel)
        artifacts = label_frame_artifacts(img, frames.camera(), profile)
        with frames.write_lock:
            _, current = frames.read_labels(rel)
            frames.write_labels(rel, artifacts.labels, current)
        return get_labels(fid)

    @app.post("/api/frames/{fid}/status", response_model=FrameInfo)
    def set_status(fid: int, body: StatusRequest):
        rel = frames.rel(fid)
        with frames.write_lock:
            frames.store.set_status(rel, body.status)
        return frame_info(fid)

    @app.post("/api/export", response_model=ExportResponse)
    def export(body: ExportRequest):
        accepted = [rel for rel in frames.paths if frames.store.status(rel) == "accepted"]
        lines = []
        for rel in accepted:
            label_rel = label_path_for(rel)
            labels, _ = frames.read_labels(rel)
            flags = " ".join("1" if i < len(labels) else "0" for i in range(4))
            lines.append(f"{rel} {label_rel} {flags}\n")
        out_path = Path(body.out_path) if body.out_path else frames.root / "accepted.txt"
        if not out_path.is_absolute():
            out_path = frames.root / out_path
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text("".join(lines))
        return ExportResponse(
            list_path=str(out_path), count=len(accepted), frames=accepted
        )

    if FRONTEND_DIST.is_dir():
        app.mount("/", StaticFiles(directory=FRONTEND_DIST, html=True), name="ui")

    return app


def serve(label_root: str | Path, cfg: PipelineConfig | None, host: str, port: int) -> None:
    """Run the review service until interrupted."""
    import uvicorn

    app = create_app(label_root, cfg)
    uvicorn.run(app, host=host, port=port, log_level="info")
