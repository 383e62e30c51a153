"""Run manifests: machine-readable record of a batch run for audit and resume.

The manifest holds one record per input frame with stage outcomes; a sidecar
append-only progress journal is written as frames complete, so a killed run
can be resumed without redoing finished frames. Timestamps are the only
non-deterministic content.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

PROGRESS_SUFFIX = ".progress.jsonl"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class FrameOutcome:
    input: str
    output: str | None = None
    stages: dict[str, str] = field(default_factory=dict)
    lanes_in: int = 0
    lanes_out: int = 0
    profile: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunManifest:
    command: str
    tool_version: str
    config_digest: str
    started: str
    finished: str = ""
    frames: list[FrameOutcome] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "tool_version": self.tool_version,
            "config_digest": self.config_digest,
            "started": self.started,
            "finished": self.finished,
            "frames": [asdict(f) for f in self.frames],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(self.to_json())
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        frames = [FrameOutcome(**f) for f in data.pop("frames", [])]
        return cls(frames=frames, **data)

    def counts(self) -> dict[str, int]:
        ok = sum(1 for f in self.frames if f.ok)
        return {"total": len(self.frames), "ok": ok, "failed": len(self.frames) - ok}


class ProgressJournal:
    """Append-only per-frame completion log next to the manifest."""

    def __init__(self, manifest_path: str | Path):
        self.path = Path(str(manifest_path) + PROGRESS_SUFFIX)

    def append(self, outcome: FrameOutcome) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a") as fh:
            fh.write(json.dumps(asdict(outcome), sort_keys=True) + "\n")
            fh.flush()

    def completed(self) -> dict[str, FrameOutcome]:
        """Inputs already processed successfully in a previous (partial) run."""
        done: dict[str, FrameOutcome] = {}
        if not self.path.is_file():
            return done
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                rec = FrameOutcome(**json.loads(line))
            except (json.JSONDecodeError, TypeError):
                continue  # torn write from a crash
            if rec.ok:
                done[rec.input] = rec
        return done

    def clear(self) -> None:
        self.path.unlink(missing_ok=True)
