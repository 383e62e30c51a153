"""Review bookkeeping for labeled trees: statuses, edit journal, tree lock.

State lives in a ".review" directory at the root of the labeled tree:
"state.json" maps frame paths to review statuses, "journal.jsonl" is an
append-only log of every mutation (label digests before and after), and
"lock" prevents a labeling batch and the review service from mutating the
same tree at once.
"""

from __future__ import annotations

import hashlib
import json
import os
from contextlib import contextmanager
from pathlib import Path

from .errors import LockError

REVIEW_DIR = ".review"
STATUSES = ("pending", "accepted", "rejected")


def labels_digest(lines_text: str) -> str:
    return hashlib.sha256(lines_text.encode()).hexdigest()[:16]


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


@contextmanager
def tree_lock(root: str | Path, owner: str):
    """Exclusive lock on a labeled tree; stale locks from dead processes are reclaimed."""
    root = Path(root)
    lock_dir = root / REVIEW_DIR
    lock_dir.mkdir(parents=True, exist_ok=True)
    lock_path = lock_dir / "lock"
    payload = json.dumps({"pid": os.getpid(), "owner": owner})
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        stale = False
        try:
            held = json.loads(lock_path.read_text())
            stale = not _pid_alive(int(held.get("pid", -1)))
        except (json.JSONDecodeError, OSError, ValueError):
            stale = True
        if not stale:
            raise LockError(
                f"{lock_path} is held by a live process; "
                "a labeling batch and the review service cannot share a tree"
            ) from None
        lock_path.unlink(missing_ok=True)
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    try:
        os.write(fd, payload.encode())
        os.close(fd)
        yield
    finally:
        lock_path.unlink(missing_ok=True)


class ReviewStore:
    """Statuses plus the mutation journal for one labeled tree."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.dir = self.root / REVIEW_DIR
        self.state_path = self.dir / "state.json"
        self.journal_path = self.dir / "journal.jsonl"
        self._state: dict[str, dict] = {}
        if self.state_path.is_file():
            self._state = json.loads(self.state_path.read_text())

    def status(self, rel_path: str) -> str:
        return self._state.get(rel_path, {}).get("status", "pending")

    def set_status(self, rel_path: str, status: str) -> None:
        if status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}, got {status!r}")
        previous = self.status(rel_path)
        self._state.setdefault(rel_path, {})["status"] = status
        self._save()
        self._journal(
            {"frame": rel_path, "event": "status", "from": previous, "to": status}
        )

    def record_edit(self, rel_path: str, before_digest: str, after_digest: str) -> None:
        self._journal(
            {
                "frame": rel_path,
                "event": "labels",
                "before": before_digest,
                "after": after_digest,
            }
        )

    def accepted_frames(self) -> list[str]:
        return sorted(
            rel for rel, entry in self._state.items() if entry.get("status") == "accepted"
        )

    def _save(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        tmp = self.state_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self._state, indent=2, sort_keys=True) + "\n")
        tmp.replace(self.state_path)

    def _journal(self, entry: dict) -> None:
        from .manifest import utc_now

        self.dir.mkdir(parents=True, exist_ok=True)
        entry = {**entry, "timestamp": utc_now()}
        with self.journal_path.open("a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
            fh.flush()
