"""Built-in Gzip/Tar/Cpio unpackers and the external adapter hook.

Every member is written through :class:`GuardedTree`, which refuses any path
that would land outside the destination directory, including paths that pass
through a symlink materialised earlier in the same archive.
"""

from __future__ import annotations

import io
import logging
import os
import posixpath
import shlex
import stat
import subprocess
import tarfile
import tempfile
import zlib
from pathlib import Path
from typing import Callable, Mapping

from ..errors import CorruptArchive, UnsupportedFormat
from .signatures import ADAPTER_FORMATS, Format

logger = logging.getLogger(__name__)

MAX_DECOMPRESSED = 1 << 30
_CHUNK = 1 << 20

EventSink = Callable[[str, str, str], None]


def _default_sink(action: str, path: str, outcome: str) -> None:
    logger.debug("%s %s %s", action, path, outcome)


class GuardedTree:
    """Writes archive members below ``dest`` and nowhere else."""

    def __init__(self, dest: Path, events: EventSink | None = None):
        self.dest = Path(dest)
        self.dest.mkdir(parents=True, exist_ok=True)
        self.events = events or _default_sink
        self.skipped: list[str] = []

    def _skip(self, name: str, why: str) -> None:
        logger.warning("skipping archive member %r: %s", name, why)
        self.skipped.append(name)
        self.events("skip", name, why)

    def target(self, name: str) -> Path | None:
        rel = posixpath.normpath(name.replace("\\", "/").lstrip("/"))
        if rel in ("", "."):
            return None
        if rel == ".." or rel.startswith("../"):
            self._skip(name, "path escapes workspace")
            return None
        cur = self.dest
        for part in rel.split("/")[:-1]:
            cur = cur / part
            if cur.is_symlink():
                self._skip(name, "parent directory is a symlink")
                return None
            if cur.exists() and not cur.is_dir():
                self._skip(name, "parent is not a directory")
                return None
        return self.dest / rel

    def _clear(self, path: Path) -> bool:
        if path.is_symlink() or path.is_file():
            path.unlink()
        elif path.exists():
            return False
        return True

    def mkdir(self, name: str, mode: int = 0o755) -> None:
        path = self.target(name)
        if path is None:
            return
        if path.is_symlink() or (path.exists() and not path.is_dir()):
            self._skip(name, "directory collides with existing entry")
            return
        path.mkdir(parents=True, exist_ok=True)
        os.chmod(path, (mode & 0o777) | stat.S_IRWXU)

    def write_file(self, name: str, data: bytes, mode: int = 0o644) -> Path | None:
        path = self.target(name)
        if path is None:
            return None
        path.parent.mkdir(parents=True, exist_ok=True)
        if not self._clear(path):
            self._skip(name, "file collides with existing directory")
            return None
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_EXCL | os.O_NOFOLLOW, 0o600)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(path, mode & 0o777)
        return path

    def symlink(self, name: str, link_target: str) -> None:
        # The link is stored verbatim; nothing in this package follows it on the host.
        path = self.target(name)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        if not self._clear(path):
            self._skip(name, "symlink collides with existing directory")
            return
        os.symlink(link_target, path)

    def read_member(self, name: str) -> bytes | None:
        path = self.target(name)
        if path is None or path.is_symlink() or not path.is_file():
            return None
        return path.read_bytes()


# -- gzip --------------------------------------------------------------------

def _gzip_member_name(blob: bytes) -> str:
    if len(blob) < 10:
        raise CorruptArchive("gzip header truncated")
    flags = blob[3]
    pos = 10
    if flags & 0x04:
        xlen = int.from_bytes(blob[pos:pos + 2], "little")
        pos += 2 + xlen
    name = ""
    if flags & 0x08:
        end = blob.find(b"\x00", pos)
        if end == -1:
            raise CorruptArchive("gzip FNAME field unterminated")
        name = posixpath.basename(blob[pos:end].decode("latin-1").replace("\\", "/"))
    if name in ("", ".", ".."):
        name = "payload"
    return name


def _unpack_gzip(blob: bytes, tree: GuardedTree) -> int:
    if blob[:2] != b"\x1f\x8b":
        raise CorruptArchive("missing gzip magic")
    name = _gzip_member_name(blob)
    d = zlib.decompressobj(wbits=31)
    out = bytearray()
    pending = blob
    try:
        while pending and not d.eof:
            out += d.decompress(pending, _CHUNK)
            pending = d.unconsumed_tail
            if len(out) > MAX_DECOMPRESSED:
                raise CorruptArchive("decompressed size exceeds limit")
        if not d.eof:
            out += d.flush()
    except zlib.error as exc:
        raise CorruptArchive(f"gzip stream: {exc}") from exc
    if not d.eof:
        raise CorruptArchive("gzip stream truncated")
    tree.write_file(name, bytes(out))
    return len(blob) - len(d.unused_data)


# -- tar ---------------------------------------------------------------------

def _unpack_tar(blob: bytes, tree: GuardedTree) -> int:
    try:
        tf = tarfile.open(fileobj=io.BytesIO(blob), mode="r:")
    except (tarfile.TarError, EOFError) as exc:
        raise CorruptArchive(f"tar header: {exc}") from exc
    with tf:
        try:
            for member in tf:
                _tar_member(tf, member, tree)
        except (tarfile.TarError, EOFError) as exc:
            raise CorruptArchive(f"tar body: {exc}") from exc
        return tf.offset


def _tar_member(tf: tarfile.TarFile, member: tarfile.TarInfo, tree: GuardedTree) -> None:
    if member.isdir():
        tree.mkdir(member.name, member.mode)
    elif member.isreg():
        fh = tf.extractfile(member)
        data = fh.read() if fh is not None else b""
        if len(data) != member.size:
            raise CorruptArchive(f"tar member {member.name!r} truncated")
        tree.write_file(member.name, data, member.mode)
    elif member.issym():
        tree.symlink(member.name, member.linkname)
    elif member.islnk():
        data = tree.read_member(member.linkname)
        if data is None:
            tree._skip(member.name, f"hardlink target {member.linkname!r} unavailable")
        else:
            tree.write_file(member.name, data, member.mode)
    else:
        tree._skip(member.name, "device or special file")


# -- cpio --------------------------------------------------------------------

_S_IFMT = 0o170000
_S_IFDIR = 0o040000
_S_IFREG = 0o100000
_S_IFLNK = 0o120000
_TRAILER = "TRAILER!!!"


def _align4(n: int) -> int:
    return (n + 3) & ~3


def _cpio_header(blob: bytes, pos: int) -> tuple[dict[str, int], str, int, int]:
    """Decode one header; return fields, name, data start and data length."""
    magic = blob[pos:pos + 6]
    try:
        if magic in (b"070701", b"070702"):
            hdr = blob[pos:pos + 110]
            if len(hdr) < 110:
                raise CorruptArchive("cpio newc header truncated")
            vals = [int(hdr[6 + 8 * i:14 + 8 * i], 16) for i in range(13)]
            keys = ("ino", "mode", "uid", "gid", "nlink", "mtime", "filesize",
                    "devmajor", "devminor", "rdevmajor", "rdevminor", "namesize", "check")
            f = dict(zip(keys, vals))
            name_start = pos + 110
            data_start = _align4(name_start + f["namesize"] - pos) + pos
        elif magic == b"070707":
            hdr = blob[pos:pos + 76]
            if len(hdr) < 76:
                raise CorruptArchive("cpio odc header truncated")
            widths = (("dev", 6), ("ino", 6), ("mode", 6), ("uid", 6), ("gid", 6),
                      ("nlink", 6), ("rdev", 6), ("mtime", 11), ("namesize", 6),
                      ("filesize", 11))
            f, cur = {}, pos + 6
            for key, width in widths:
                f[key] = int(hdr[cur - pos:cur - pos + width], 8)
                cur += width
            name_start = pos + 76
            data_start = name_start + f["namesize"]
        else:
            raise CorruptArchive(f"bad cpio magic at {pos}")
    except ValueError as exc:
        raise CorruptArchive(f"cpio header field at {pos}: {exc}") from exc
    raw_name = blob[name_start:name_start + f["namesize"]]
    if len(raw_name) < f["namesize"] or not raw_name.endswith(b"\x00"):
        raise CorruptArchive("cpio name truncated")
    name = raw_name[:-1].decode("utf-8", "surrogateescape")
    if data_start + f["filesize"] > len(blob):
        raise CorruptArchive(f"cpio member {name!r} truncated")
    return f, name, data_start, f["filesize"]


def _unpack_cpio(blob: bytes, tree: GuardedTree) -> int:
    pos = 0
    newc = blob[:6] in (b"070701", b"070702")
    deferred: dict[int, list[tuple[str, int]]] = {}
    while True:
        f, name, start, size = _cpio_header(blob, pos)
        end = start + size
        pos = _align4(end) if newc else end
        if name == _TRAILER:
            return pos
        data = blob[start:end]
        kind = f["mode"] & _S_IFMT
        if kind == _S_IFDIR:
            tree.mkdir(name, f["mode"])
        elif kind == _S_IFLNK:
            tree.symlink(name, data.decode("utf-8", "surrogateescape"))
        elif kind == _S_IFREG:
            if newc and f["nlink"] > 1 and size == 0:
                deferred.setdefault(f["ino"], []).append((name, f["mode"]))
                continue
            tree.write_file(name, data, f["mode"])
            for other, mode in deferred.pop(f["ino"], []):
                tree.write_file(other, data, mode)
        else:
            tree._skip(name, "device or special file")


# -- dispatch ----------------------------------------------------------------

_BUILTIN = {
    Format.GZIP: _unpack_gzip,
    Format.TAR: _unpack_tar,
    Format.CPIO: _unpack_cpio,
}


def unpack_builtin(blob: bytes, fmt: Format, dest: Path,
                   events: EventSink | None = None) -> int:
    """Unpack ``blob`` into ``dest`` and return the number of bytes consumed.

    Trailing bytes after the container end are ignored, so callers may pass
    the whole remainder of an image.
    """
    handler = _BUILTIN.get(Format(fmt))
    if handler is None:
        raise UnsupportedFormat(f"no built-in unpacker for {Format(fmt).value}")
    return handler(blob, GuardedTree(dest, events))


def run_adapter(template: str, input_path: Path, dest: Path, timeout: float = 600) -> None:
    """Run an external unpacker command; ``{input}``/``{output}`` are substituted."""
    dest.mkdir(parents=True, exist_ok=True)
    argv = [tok.format(input=str(input_path), output=str(dest))
            for tok in shlex.split(template)]
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=timeout, check=False)
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise CorruptArchive(f"adapter {argv[0]!r} failed: {exc}") from exc
    if proc.returncode != 0:
        tail = proc.stderr.decode("utf-8", "replace").strip()[-400:]
        raise CorruptArchive(f"adapter exited {proc.returncode}: {tail}")


def unpack(blob: bytes, format: Format | str, workspace: str | os.PathLike,
           adapters: Mapping[str, str] | None = None) -> Path:
    """Materialise one container under ``workspace`` and return the tree root.

    Gzip, Tar and Cpio are handled in-process.  Flash filesystem formats need
    an entry in ``adapters`` keyed by format name; without one they raise
    :class:`UnsupportedFormat`.
    """
    fmt = Format(format)
    dest = Path(workspace)
    if dest.exists() and any(dest.iterdir()):
        raise FileExistsError(f"workspace {dest} is not empty")
    if fmt in _BUILTIN:
        unpack_builtin(blob, fmt, dest)
        return dest
    template = (adapters or {}).get(fmt.value)
    if fmt not in ADAPTER_FORMATS or not template:
        raise UnsupportedFormat(f"no handler or adapter configured for {fmt.value}")
    dest.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / f"blob.{fmt.value}.bin"
        src.write_bytes(blob)
        run_adapter(template, src, dest)
    return dest
