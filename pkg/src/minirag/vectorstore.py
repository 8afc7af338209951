"""Flat exact-search vector store with named namespaces.

Search is a linear cosine scan over a dense float64 matrix. Persistence is one
JSON-lines file per namespace: a header line, then one ``{"id", "f64"}``
record per entry, ``f64`` being the base64 of the little-endian float64
bytes (exact round trip, about half the size of decimal floats).
"""

from __future__ import annotations

import base64
import json
import os
import warnings
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from minirag.errors import DimensionMismatchError, FormatError

VECTOR_FORMAT = "jsonl-b64f64-v1"


class ZeroVectorWarning(UserWarning):
    pass


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine similarity with a zero vector; returning 0", ZeroVectorWarning, stacklevel=2)
        return 0.0
    return float(min(1.0, max(-1.0, float(np.dot(a, b)) / (na * nb))))


class VectorNamespace:
    def __init__(self, name: str, dim: int | None = None):
        self.name = name
        self.dim = dim
        self._keys: list[str] = []
        self._index: dict[str, int] = {}
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None
        self._unit: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def keys(self) -> list[str]:
        return list(self._keys)

    def get(self, key: str) -> np.ndarray:
        return self._rows[self._index[key]]

    def add(self, key: str, vector: Sequence[float]) -> None:
        vec = np.asarray(vector, dtype=np.float64).reshape(-1)
        if self.dim is None:
            if vec.size == 0:
                raise ValueError("empty vector")
            self.dim = int(vec.size)
        elif vec.size != self.dim:
            raise DimensionMismatchError(f"namespace {self.name!r} has dim {self.dim}, got {vec.size}")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"non-finite value in vector for {key!r}")
        if key in self._index:
            self._rows[self._index[key]] = vec
        else:
            self._index[key] = len(self._keys)
            self._keys.append(key)
            self._rows.append(vec)
        self._matrix = self._unit = None

    def add_many(self, items: Iterable[tuple[str, Sequence[float]]]) -> None:
        for key, vec in items:
            self.add(key, vec)

    def merge(self, other: "VectorNamespace") -> None:
        if self.dim is not None and other.dim is not None and self.dim != other.dim:
            raise DimensionMismatchError(f"cannot merge dim {other.dim} into dim {self.dim}")
        for key in other._keys:
            self.add(key, other.get(key))

    def _prepare(self) -> tuple[np.ndarray, np.ndarray]:
        if self._unit is None:
            self._matrix = np.vstack(self._rows)
            norms = np.linalg.norm(self._matrix, axis=1)
            self._zero = norms == 0.0
            safe = np.where(self._zero, 1.0, norms)
            self._unit = self._matrix / safe[:, None]
        return self._unit, self._zero

    def scores(self, query: Sequence[float]) -> np.ndarray:
        """Cosine of ``query`` against every entry, in insertion order."""
        if not self._keys:
            return np.zeros(0)
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        if q.size != self.dim:
            raise DimensionMismatchError(f"query dim {q.size} vs namespace dim {self.dim}")
        unit, zero = self._prepare()
        qn = float(np.linalg.norm(q))
        if qn == 0.0 or zero.any():
            warnings.warn("zero vector in cosine search; treated as similarity 0", ZeroVectorWarning, stacklevel=2)
        if qn == 0.0:
            return np.zeros(len(self._keys))
        s = unit @ (q / qn)
        s[zero] = 0.0
        return np.clip(s, -1.0, 1.0)

    def top_k(self, query: Sequence[float], k: int, keys: Iterable[str] | None = None) -> list[tuple[str, float]]:
        """Exact top-k by cosine, ties broken by key ascending.

        ``keys`` restricts the search to a subset of entries.
        """
        if k <= 0:
            raise ValueError("k must be positive")
        if not self._keys:
            return []
        s = self.scores(query)
        if keys is None:
            idx = range(len(self._keys))
        else:
            idx = [self._index[key] for key in keys if key in self._index]
        ranked = sorted(((-float(s[i]), self._keys[i]) for i in idx))
        return [(key, -neg) for neg, key in ranked[:k]]

    # -- persistence --------------------------------------------------------

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            header = {"namespace": self.name, "dim": self.dim, "count": len(self._keys), "format": VECTOR_FORMAT}
            fh.write(json.dumps(header) + "\n")
            for key in sorted(self._keys):
                fh.write(json.dumps({"id": key, "f64": encode_vector(self.get(key))}, ensure_ascii=False) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "VectorNamespace":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except FileNotFoundError:
            raise FormatError("missing file", str(path)) from None
        if not lines:
            raise FormatError("empty file, expected header line", str(path), 1)
        header = _parse_line(lines[0], path, 1)
        if header.get("format") != VECTOR_FORMAT or "dim" not in header or "count" not in header:
            raise FormatError(f"bad header {header!r}", str(path), 1)
        ns = cls(str(header.get("namespace", path.stem)), header["dim"])
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            rec = _parse_line(line, path, lineno)
            if not isinstance(rec.get("id"), str) or not isinstance(rec.get("f64"), str):
                raise FormatError("record needs string 'id' and base64 'f64'", str(path), lineno)
            try:
                ns.add(rec["id"], decode_vector(rec["f64"]))
            except (ValueError, TypeError) as exc:
                raise FormatError(str(exc), str(path), lineno) from None
        if len(ns) != header["count"]:
            raise FormatError(f"header says {header['count']} entries, found {len(ns)}", str(path))
        return ns


def encode_vector(vec: np.ndarray) -> str:
    return base64.b64encode(np.asarray(vec, dtype="<f8").tobytes()).decode("ascii")


def decode_vector(text: str) -> np.ndarray:
    try:
        raw = base64.b64decode(text, validate=True)
    except ValueError:
        raise ValueError("f64 is not valid base64") from None
    if len(raw) % 8:
        raise ValueError("f64 byte length is not a multiple of 8")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def _parse_line(line: str, path: Path, lineno: int) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", str(path), lineno) from None
    if not isinstance(rec, dict):
        raise FormatError("expected a JSON object", str(path), lineno)
    return rec


class VectorStore:
    """A set of namespaces persisted as ``vectors-<name>.jsonl`` files."""

    def __init__(self) -> None:
        self.namespaces: dict[str, VectorNamespace] = {}

    def namespace(self, name: str) -> VectorNamespace:
        if name not in self.namespaces:
            self.namespaces[name] = VectorNamespace(name)
        return self.namespaces[name]

    def __getitem__(self, name: str) -> VectorNamespace:
        return self.namespace(name)

    def sizes(self) -> dict[str, int]:
        return {name: len(ns) for name, ns in sorted(self.namespaces.items())}

    def save(self, directory: str | os.PathLike) -> list[str]:
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        written = []
        for name, ns in sorted(self.namespaces.items()):
            fname = f"vectors-{name}.jsonl"
            ns.save(root / fname)
            written.append(fname)
        return written

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "VectorStore":
        store = cls()
        for path in sorted(Path(directory).glob("vectors-*.jsonl")):
            ns = VectorNamespace.load(path)
            store.namespaces[path.stem[len("vectors-"):]] = ns
        return store

