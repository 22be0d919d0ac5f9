"""Write-once object store with compare-and-swap refs.

Objects live under <root>/objects/<key> and are immutable once written.
Refs live under <root>/refs/<escaped-name> and hold one 64-hex hash plus a
trailing newline; they are the only mutable state, advanced exclusively by
compare-and-swap.

put() gains write-once atomicity from os.link: the temp file is linked to
the final path, which fails with EEXIST if any other writer got there
first. cas_ref() serializes per-ref via an flock'd lock file and then
publishes the new value with an atomic rename.
"""

from __future__ import annotations

import fcntl
import os
import urllib.parse
from pathlib import Path

from .errors import AlreadyExists, IoError, NotFound

_HEX = set("0123456789abcdef")


def _is_hash(text: str) -> bool:
    return len(text) == 64 and all(c in _HEX for c in text)


def validate_key(key: str) -> None:
    if not key:
        raise IoError("empty object key")
    if key.startswith("/") or key.endswith("/"):
        raise IoError(f"object key must not start or end with '/': {key!r}")
    for seg in key.split("/"):
        if seg in ("", ".", ".."):
            raise IoError(f"bad path segment in object key: {key!r}")


class ObjectStore:
    """Filesystem-backed write-once store rooted at one directory."""

    def __init__(self, root: str | os.PathLike[str]):
        self.root = Path(root)
        self._objects = self.root / "objects"
        self._refs = self.root / "refs"
        self._tmp = self.root / "tmp"
        for d in (self._objects, self._refs, self._tmp):
            d.mkdir(parents=True, exist_ok=True)

    # --- objects -----------------------------------------------------------

    def _object_path(self, key: str) -> Path:
        validate_key(key)
        return self._objects / key

    def put(self, key: str, data: bytes) -> None:
        """Store bytes under a new key; the key must be unoccupied."""
        path = self._object_path(key)
        tmp = self._tmp / f"put-{os.getpid()}-{os.urandom(8).hex()}"
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(tmp, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            try:
                os.link(tmp, path)
            except FileExistsError:
                raise AlreadyExists(f"object already exists: {key}") from None
        except OSError as exc:
            raise IoError(f"put failed for {key}: {exc}") from exc
        finally:
            try:
                os.unlink(tmp)
            except OSError:
                pass

    def get(self, key: str) -> bytes:
        path = self._object_path(key)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise NotFound(f"no object: {key}") from None
        except OSError as exc:
            raise IoError(f"get failed for {key}: {exc}") from exc

    def exists(self, key: str) -> bool:
        return self._object_path(key).is_file()

    def delete(self, key: str) -> None:
        path = self._object_path(key)
        try:
            os.unlink(path)
        except FileNotFoundError:
            raise NotFound(f"no object: {key}") from None
        except OSError as exc:
            raise IoError(f"delete failed for {key}: {exc}") from exc

    def list(self, prefix: str = "") -> list[str]:
        """All keys starting with prefix, lexicographically sorted."""
        out: list[str] = []
        base = self._objects
        if not base.is_dir():
            return out
        for dirpath, _dirnames, filenames in os.walk(base):
            rel = os.path.relpath(dirpath, base)
            for name in filenames:
                key = name if rel == "." else f"{rel}/{name}".replace(os.sep, "/")
                if key.startswith(prefix):
                    out.append(key)
        out.sort()
        return out

    def stat(self, key: str) -> tuple[int, int]:
        """(size_bytes, mtime_ms) of a stored object."""
        path = self._object_path(key)
        try:
            st = path.stat()
        except FileNotFoundError:
            raise NotFound(f"no object: {key}") from None
        except OSError as exc:
            raise IoError(f"stat failed for {key}: {exc}") from exc
        return st.st_size, st.st_mtime_ns // 1_000_000

    # --- refs ----------------------------------------------------------------

    def _ref_path(self, name: str) -> Path:
        if not name:
            raise IoError("empty ref name")
        return self._refs / urllib.parse.quote(name, safe="")

    def read_ref(self, name: str) -> str | None:
        """Current hash of a ref, or None if the ref does not exist."""
        path = self._ref_path(name)
        try:
            text = path.read_text("utf-8")
        except FileNotFoundError:
            return None
        except OSError as exc:
            raise IoError(f"read_ref failed for {name}: {exc}") from exc
        value = text.strip()
        if not _is_hash(value):
            raise IoError(f"ref {name} holds a malformed value")
        return value

    def cas_ref(self, name: str, expected: str | None, new: str) -> bool:
        """Atomically move a ref from expected to new.

        expected None means the ref must not exist yet. Returns True on
        success, False if the current value differs from expected.
        """
        if not _is_hash(new):
            raise IoError(f"new ref value is not a 64-hex hash: {new!r}")
        path = self._ref_path(name)
        lock_path = Path(str(path) + ".lock")
        try:
            with open(lock_path, "a+") as lock:
                fcntl.flock(lock.fileno(), fcntl.LOCK_EX)
                current = self.read_ref(name)
                if current != expected:
                    return False
                tmp = self._tmp / f"ref-{os.getpid()}-{os.urandom(8).hex()}"
                with open(tmp, "w", encoding="utf-8") as fh:
                    fh.write(new + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, path)
                return True
        except OSError as exc:
            raise IoError(f"cas_ref failed for {name}: {exc}") from exc

    def delete_ref(self, name: str) -> None:
        path = self._ref_path(name)
        try:
            os.unlink(path)
        except FileNotFoundError:
            raise NotFound(f"no ref: {name}") from None
        except OSError as exc:
            raise IoError(f"delete_ref failed for {name}: {exc}") from exc

    def list_refs(self) -> list[str]:
        """All ref names, lexicographically sorted."""
        out = []
        for p in self._refs.iterdir():
            if p.name.endswith(".lock"):
                continue
            if p.is_file():
                out.append(urllib.parse.unquote(p.name))
        out.sort()
        return out
