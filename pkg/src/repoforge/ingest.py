"""Repository discovery, immutable snapshots and size filtering."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from types import MappingProxyType
from typing import Iterable, Mapping

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WarningRecord:
    """A non-fatal problem noticed while processing a repository."""

    repo_id: str
    stage: str
    path: str
    reason: str

    def to_dict(self) -> dict:
        return {"repo_id": self.repo_id, "stage": self.stage, "path": self.path, "reason": self.reason}


@dataclass(frozen=True)
class FilterConfig:
    min_files: int = 2
    max_files: int = 64
    min_total_bytes: int = 1024
    max_total_bytes: int = 262144
    include_extensions: frozenset[str] = frozenset({"py"})

    def __post_init__(self):
        if self.min_files > self.max_files:
            raise ValueError(f"min_files ({self.min_files}) > max_files ({self.max_files})")
        if self.min_total_bytes > self.max_total_bytes:
            raise ValueError(
                f"min_total_bytes ({self.min_total_bytes}) > max_total_bytes ({self.max_total_bytes})"
            )
        # accept ".py" as well as "py"
        object.__setattr__(
            self, "include_extensions", frozenset(e.lstrip(".") for e in self.include_extensions)
        )


def normalize_relpath(path: str) -> str:
    """Return a forward-slash relative path, rejecting absolute paths and `..`."""
    parts = [p for p in path.replace("\\", "/").split("/") if p not in ("", ".")]
    if not parts or path.startswith("/") or ".." in parts:
        raise ValueError(f"not a normalized relative path: {path!r}")
    return "/".join(parts)


@dataclass(frozen=True)
class RepoSnapshot:
    repo_id: str
    root: str
    files: Mapping[str, bytes]
    warnings: tuple[WarningRecord, ...] = field(default=(), compare=False)

    def __post_init__(self):
        checked = {}
        for path in sorted(self.files):
            norm = normalize_relpath(path)
            if norm != path:
                raise ValueError(f"path {path!r} is not normalized (expected {norm!r})")
            checked[path] = bytes(self.files[path])
        object.__setattr__(self, "files", MappingProxyType(checked))

    @property
    def total_bytes(self) -> int:
        return sum(len(b) for b in self.files.values())

    @property
    def file_count(self) -> int:
        return len(self.files)

    @property
    def paths(self) -> list[str]:
        return list(self.files)

    def text(self, path: str) -> str:
        return self.files[path].decode("utf-8")

    @classmethod
    def from_texts(cls, repo_id: str, texts: Mapping[str, str], root: str = "") -> "RepoSnapshot":
        return cls(repo_id, root, {p: t.encode("utf-8") for p, t in texts.items()})


def _extension(name: str) -> str:
    suffix = PurePosixPath(name).suffix
    return suffix[1:] if suffix else ""


def scan_repository(root: str | os.PathLike, cfg: FilterConfig, repo_id: str | None = None) -> RepoSnapshot:
    """Read every matching regular file under `root` into a snapshot.

    Symlinked directories are followed once; a directory already on the
    current walk (a cycle) is skipped with a warning, as are binary and
    non-UTF-8 files.
    """
    root_path = Path(root)
    if not root_path.is_dir():
        raise NotADirectoryError(f"repository root is not a directory: {root}")
    repo_id = repo_id or root_path.name
    files: dict[str, bytes] = {}
    warnings: list[WarningRecord] = []

    def warn(rel: str, reason: str):
        log.warning("%s: %s: %s", repo_id, rel, reason)
        warnings.append(WarningRecord(repo_id, "scan", rel, reason))

    def walk(directory: Path, rel_parts: tuple[str, ...], ancestors: frozenset):
        try:
            entries = sorted(os.scandir(directory), key=lambda e: e.name)
        except OSError as exc:
            if not rel_parts:
                raise
            warn("/".join(rel_parts), f"unreadable directory: {exc}")
            return
        for entry in entries:
            rel = "/".join(rel_parts + (entry.name,))
            if entry.is_dir(follow_symlinks=True):
                real = os.path.realpath(entry.path)
                if real in ancestors:
                    warn(rel, "symlink cycle")
                    continue
                walk(Path(entry.path), rel_parts + (entry.name,), ancestors | {real})
            elif entry.is_file(follow_symlinks=True):
                if _extension(entry.name) not in cfg.include_extensions:
                    continue
                try:
                    data = Path(entry.path).read_bytes()
                except OSError as exc:
                    warn(rel, f"unreadable file: {exc}")
                    continue
                if b"\x00" in data:
                    warn(rel, "binary file")
                    continue
                try:
                    data.decode("utf-8")
                except UnicodeDecodeError:
                    warn(rel, "not valid UTF-8")
                    continue
                files[rel] = data

    walk(root_path, (), frozenset({os.path.realpath(root_path)}))
    return RepoSnapshot(repo_id, str(root_path), files, tuple(warnings))


def discover_repositories(root: str | os.PathLike) -> list[Path]:
    """Each immediate subdirectory of `root` is one repository (sorted by name)."""
    root_path = Path(root)
    if not root_path.is_dir():
        raise NotADirectoryError(f"not a directory: {root}")
    return sorted((p for p in root_path.iterdir() if p.is_dir()), key=lambda p: p.name)


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    reason: str = ""

    def __bool__(self):
        return self.accepted


def filter_snapshot(snap: RepoSnapshot, cfg: FilterConfig) -> FilterDecision:
    if snap.file_count < cfg.min_files:
        return FilterDecision(False, f"too few files ({snap.file_count} < min_files={cfg.min_files})")
    if snap.file_count > cfg.max_files:
        return FilterDecision(False, f"too many files ({snap.file_count} > max_files={cfg.max_files})")
    if snap.total_bytes < cfg.min_total_bytes:
        return FilterDecision(
            False, f"too few bytes ({snap.total_bytes} < min_total_bytes={cfg.min_total_bytes})"
        )
    if snap.total_bytes > cfg.max_total_bytes:
        return FilterDecision(
            False, f"too many bytes ({snap.total_bytes} > max_total_bytes={cfg.max_total_bytes})"
        )
    return FilterDecision(True)


def scan_many(roots: Iterable[Path], cfg: FilterConfig, jobs: int = 1) -> list[RepoSnapshot]:
    roots = list(roots)
    if jobs <= 1:
        return [scan_repository(r, cfg) for r in roots]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda r: scan_repository(r, cfg), roots))
