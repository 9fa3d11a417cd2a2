"""Append-only on-disk store of band samples.

One record per line, tab separated:

    E  digest  mode  h  k1  k2  m  lambdas  [vectors]

Floats are written with 17 significant digits so a read returns the exact
binary64 values that were stored.  The first line is a versioned header.
"""

from __future__ import annotations

import fcntl
import os
import threading
from pathlib import Path

import numpy as np

from .errors import CacheCorruption

CACHE_HEADER = "# bandinterp-eigencache"
CACHE_VERSION = 1
K_DECIMALS = 12


def _fmt(x):
    return f"{float(x):.17g}"


def cache_key(digest, mode, h, k, m):
    """Canonical key; k is rounded to 1e-12 and -0.0 folded into 0.0."""
    k1, k2 = (round(float(v), K_DECIMALS) + 0.0 for v in k)
    return (str(digest), str(mode).lower(), _fmt(h), _fmt(k1), _fmt(k2), int(m))


class EigenCache:
    """Thread-safe cache; appends are serialized with an exclusive file lock."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self._data = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def __len__(self):
        return len(self._data)

    def __contains__(self, key):
        return key in self._data

    def _load(self):
        with open(self.path, "r") as fh:
            fcntl.flock(fh, fcntl.LOCK_SH)
            try:
                lines = fh.read().splitlines()
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)
        if not lines:
            return
        head = lines[0].split()
        if len(lines[0]) == 0 or " ".join(head[:2]) != CACHE_HEADER or len(head) < 3:
            raise CacheCorruption(f"{self.path}: missing cache header")
        if head[2] != f"v{CACHE_VERSION}":
            raise CacheCorruption(f"{self.path}: unsupported cache version {head[2]}")
        for lineno, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            try:
                key, lam, vec = self._parse(line)
            except (ValueError, IndexError) as exc:
                raise CacheCorruption(f"{self.path}:{lineno}: {exc}") from exc
            self._data[key] = (lam, vec)

    @staticmethod
    def _parse(line):
        parts = line.split("\t")
        if parts[0] != "E" or len(parts) not in (8, 9):
            raise ValueError("malformed record")
        digest, mode, h, k1, k2, m = parts[1:7]
        key = (digest, mode, h, k1, k2, int(m))
        lam = np.array([float(t) for t in parts[7].split()])
        if len(lam) != key[5]:
            raise ValueError("eigenvalue count does not match key")
        vec = None
        if len(parts) == 9:
            flat = np.array([float(t) for t in parts[8].split()])
            vec = (flat[0::2] + 1j * flat[1::2]).reshape(-1, key[5])
        return key, lam, vec

    @staticmethod
    def _format(key, lam, vec):
        fields = ["E", *map(str, key), " ".join(_fmt(v) for v in lam)]
        if vec is not None:
            v = np.asarray(vec).ravel()
            inter = np.empty(2 * v.size)
            inter[0::2], inter[1::2] = v.real, v.imag
            fields.append(" ".join(_fmt(x) for x in inter))
        return "\t".join(fields)

    def get(self, key):
        """(lambdas, vectors-or-None) for ``key`` or None."""
        with self._lock:
            hit = self._data.get(key)
        if hit is None:
            return None
        lam, vec = hit
        return lam.copy(), None if vec is None else vec.copy()

    def put_many(self, items):
        """Insert [(key, lambdas, vectors-or-None)] as one exclusive write batch."""
        items = [(k, np.asarray(l, dtype=float), v) for k, l, v in items]
        with self._lock:
            fresh = [(k, l, v) for k, l, v in items if k not in self._data]
            for k, l, v in fresh:
                self._data[k] = (l.copy(), None if v is None else np.asarray(v).copy())
            if self.path is None or not fresh:
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a") as fh:
                fcntl.flock(fh, fcntl.LOCK_EX)
                try:
                    if fh.tell() == 0:
                        fh.write(f"{CACHE_HEADER} v{CACHE_VERSION}\n")
                    fh.write("".join(self._format(k, l, v) + "\n" for k, l, v in fresh))
                    fh.flush()
                    os.fsync(fh.fileno())
                finally:
                    fcntl.flock(fh, fcntl.LOCK_UN)

    def put(self, key, lambdas, vectors=None):
        self.put_many([(key, lambdas, vectors)])
