"""Root-filesystem model: entry listing, in-tree symlink resolution, loop flags.

Symlinks are resolved against the firmware root, never against the host: an
absolute target such as ``/bin/busybox`` means ``<root>/bin/busybox`` and
``..`` cannot climb above the root.
"""

from __future__ import annotations

import os
import posixpath
import stat
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator

MAX_SYMLINK_HOPS = 40
ROOTFS_MARKERS = ("bin", "lib", "etc")
ROOTFS_THRESHOLD = 2


class EntryKind(str, Enum):
    REGULAR = "Regular"
    DIRECTORY = "Directory"
    SYMLINK = "Symlink"


class FailureReason(str, Enum):
    NO_FILESYSTEM = "NoFilesystem"
    DEPTH_LIMIT = "DepthLimit"
    ENCRYPTED = "Encrypted"
    UNSUPPORTED_FORMAT = "UnsupportedFormat"


@dataclass(frozen=True)
class FileEntry:
    path: str
    kind: EntryKind
    size: int
    mode_readable: bool
    link_target: str | None = None


class SymlinkLoop(Exception):
    pass


@dataclass
class NormalizedFileSystem:
    root_dir: Path | None
    entries: dict[str, FileEntry] = field(default_factory=dict)
    loop_flags: frozenset[tuple[str, str]] = frozenset()
    resolved: dict[str, str | None] = field(default_factory=dict)
    failure_reason: FailureReason | None = None
    filesystem: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure_reason is None

    @property
    def flagged_paths(self) -> set[str]:
        return {link for link, _ in self.loop_flags}

    def resolve(self, path: str, bound: int = MAX_SYMLINK_HOPS) -> str | None:
        """Resolve ``path`` inside the tree; ``None`` if dangling or looping."""
        try:
            return _resolve(self.entries, path, bound)
        except SymlinkLoop:
            return None

    def entry(self, path: str) -> FileEntry | None:
        return self.entries.get(_canon(path))

    def exists(self, path: str) -> bool:
        return _canon(path) in self.entries

    def files_under(self, prefix: str, recursive: bool = True) -> Iterator[FileEntry]:
        """Regular files below ``prefix`` in sorted order (symlinks excluded)."""
        base = _canon(prefix).rstrip("/") + "/"
        for path in sorted(self.entries):
            ent = self.entries[path]
            if ent.kind is not EntryKind.REGULAR or not path.startswith(base):
                continue
            if not recursive and "/" in path[len(base):]:
                continue
            yield ent

    def entries_under(self, prefix: str) -> Iterator[FileEntry]:
        base = _canon(prefix).rstrip("/") + "/"
        for path in sorted(self.entries):
            if path.startswith(base):
                yield self.entries[path]

    def read_bytes(self, path: str) -> bytes | None:
        """Contents of the regular file ``path`` resolves to, else ``None``."""
        if self.root_dir is None:
            return None
        real = self.resolve(path)
        if real is None:
            return None
        ent = self.entries.get(real)
        if ent is None or ent.kind is not EntryKind.REGULAR:
            return None
        try:
            return (self.root_dir / real.lstrip("/")).read_bytes()
        except OSError:
            return None

    def listing(self) -> list[str]:
        """Deterministic text listing, one line per entry."""
        out = []
        for path in sorted(self.entries):
            e = self.entries[path]
            line = f"{e.kind.value}\t{path}\t{e.size}"
            if e.link_target is not None:
                line += f"\t-> {e.link_target}"
            out.append(line)
        return out


def _canon(path: str) -> str:
    norm = posixpath.normpath("/" + path.lstrip("/"))
    return "/" if norm in ("/", "//") else norm


def _resolve(entries: dict[str, FileEntry], path: str, bound: int) -> str | None:
    pending = deque(p for p in path.split("/") if p)
    done: list[str] = []
    hops = 0
    while pending:
        name = pending.popleft()
        if name == ".":
            continue
        if name == "..":
            if done:
                done.pop()
            continue
        candidate = "/" + "/".join(done + [name])
        ent = entries.get(candidate)
        if ent is None:
            return None
        if ent.kind is EntryKind.SYMLINK:
            hops += 1
            if hops > bound:
                raise SymlinkLoop(candidate)
            target = ent.link_target or ""
            if target.startswith("/"):
                done = []
            pending.extendleft(reversed([p for p in target.split("/") if p]))
        elif ent.kind is EntryKind.REGULAR and pending:
            return None
        else:
            done.append(name)
    return "/" + "/".join(done)


def detect_rootfs(tree: str | os.PathLike) -> bool:
    """True when at least two of bin/, lib/, etc/ are real directories at the top."""
    root = Path(tree)
    present = 0
    for name in ROOTFS_MARKERS:
        p = root / name
        if p.is_dir() and not p.is_symlink():
            present += 1
    return present >= ROOTFS_THRESHOLD


def _walk(root: Path) -> Iterator[tuple[str, os.DirEntry]]:
    stack = [(root, "")]
    while stack:
        directory, rel = stack.pop()
        with os.scandir(directory) as it:
            items = sorted(it, key=lambda e: e.name)
        for item in reversed(items):
            child_rel = f"{rel}/{item.name}"
            yield child_rel, item
            if item.is_dir(follow_symlinks=False):
                stack.append((Path(item.path), child_rel))


def normalize(tree: str | os.PathLike, bound: int = MAX_SYMLINK_HOPS) -> NormalizedFileSystem:
    """Index ``tree``, grant owner read access everywhere, resolve symlinks.

    Symlink chains longer than ``bound`` hops are recorded in ``loop_flags`` as
    ``(link, normalised target)`` pairs instead of being followed further.
    """
    root = Path(tree)
    entries: dict[str, FileEntry] = {}
    for rel, item in _walk(root):
        st = item.stat(follow_symlinks=False)
        if stat.S_ISLNK(st.st_mode):
            entries[rel] = FileEntry(rel, EntryKind.SYMLINK, st.st_size, True,
                                     os.readlink(item.path))
        elif stat.S_ISDIR(st.st_mode):
            if st.st_mode & 0o500 != 0o500:
                os.chmod(item.path, st.st_mode | 0o500)
            entries[rel] = FileEntry(rel, EntryKind.DIRECTORY, 0, True)
        elif stat.S_ISREG(st.st_mode):
            if not st.st_mode & stat.S_IRUSR:
                os.chmod(item.path, st.st_mode | stat.S_IRUSR)
            entries[rel] = FileEntry(rel, EntryKind.REGULAR, st.st_size,
                                     os.access(item.path, os.R_OK))
        # sockets, fifos and device nodes carry nothing to analyse

    loops: set[tuple[str, str]] = set()
    resolved: dict[str, str | None] = {}
    for path in sorted(entries):
        ent = entries[path]
        if ent.kind is not EntryKind.SYMLINK:
            continue
        try:
            resolved[path] = _resolve(entries, path, bound)
        except SymlinkLoop:
            target = ent.link_target or ""
            if not target.startswith("/"):
                target = posixpath.join(posixpath.dirname(path), target)
            loops.add((path, _canon(target)))
            resolved[path] = None
    return NormalizedFileSystem(root, entries, frozenset(loops), resolved)
