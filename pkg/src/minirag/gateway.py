"""Access to chat and embedding backends.

Everything that builds an HTTP request or a prompt lives here. A ``Gateway``
pairs one chat backend with one embedding backend:

* chat: ``HTTPChat`` (OpenAI-compatible ``/chat/completions``) or
  ``ReplayChat`` (canned responses keyed by request fingerprint);
* embed: ``HTTPEmbedder`` (OpenAI-compatible ``/embeddings``) or
  ``HashEmbedder`` (deterministic, offline).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol, Sequence

import httpx
import numpy as np

from minirag.config import GatewayConfig
from minirag.errors import ProtocolError, ReplayMissError, TransportError

log = logging.getLogger(__name__)

Message = dict[str, str]

RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


# -- prompts ----------------------------------------------------------------

PROMPT_NAMES = ("extraction_minimal", "extraction_descriptive", "query_mapping", "answering", "judge")
_PLACEHOLDER = re.compile(r"\{\{\s*([a-z_]+)\s*\}\}")


class PromptLibrary:
    """Prompt templates stored as ``<name>.txt`` files with ``{{placeholder}}`` slots.

    Files are re-read when their mtime changes, so a prompt directory given in
    the config can be edited while a long run is in progress.
    """

    def __init__(self, directory: str | os.PathLike | None = None):
        self.directory = Path(directory) if directory else None
        self._cache: dict[str, tuple[float, str]] = {}

    def _path(self, name: str) -> Path | None:
        if self.directory is not None and (self.directory / f"{name}.txt").exists():
            return self.directory / f"{name}.txt"
        return None

    def source(self, name: str) -> str:
        if name not in PROMPT_NAMES:
            raise KeyError(f"unknown prompt {name!r}")
        path = self._path(name)
        if path is None:
            return resources.files("minirag.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")
        mtime = path.stat().st_mtime
        cached = self._cache.get(name)
        if cached is None or cached[0] != mtime:
            self._cache[name] = (mtime, path.read_text(encoding="utf-8"))
        return self._cache[name][1]

    def placeholders(self, name: str) -> set[str]:
        return set(_PLACEHOLDER.findall(self.source(name)))

    def render(self, name: str, **values: str) -> str:
        body = self.source(name)
        missing = self.placeholders(name) - values.keys()
        if missing:
            raise KeyError(f"prompt {name!r} missing values for {sorted(missing)}")
        return _PLACEHOLDER.sub(lambda m: str(values[m.group(1)]), body)


def fingerprint(messages: Sequence[Message]) -> str:
    canonical = json.dumps(list(messages), ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# -- backends ---------------------------------------------------------------

class ChatBackend(Protocol):
    def chat(self, messages: Sequence[Message], label: str = "") -> str: ...


class EmbedBackend(Protocol):
    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class _HTTPBase:
    def __init__(self, config: GatewayConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._client = httpx.Client(timeout=config.timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(config.max_inflight)
        self._sleep = sleep
        self.retries = 0  # cumulative retry counter
        self.requests = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "") if self.config.api_key_env else ""
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def backoff_schedule(self) -> list[float]:
        """Waits before each retry; their sum never exceeds ``retry_wait_ceiling``."""
        waits, total = [], 0.0
        for attempt in range(self.config.max_retries):
            w = min(self.config.backoff_base * 2 ** attempt, self.config.backoff_max)
            w = max(0.0, min(w, self.config.retry_wait_ceiling - total))
            waits.append(w)
            total += w
        return waits

    def _post(self, url: str, payload: dict) -> Any:
        waits = self.backoff_schedule()
        last = "no attempt made"
        status = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self.retries += 1
                self._sleep(waits[attempt - 1])
            with self._slots:
                self.requests += 1
                try:
                    resp = self._client.post(url, json=payload, headers=self._headers())
                except (httpx.TimeoutException, httpx.TransportError) as exc:
                    last, status = f"{type(exc).__name__}: {exc}", None
                    log.warning("request to %s failed (%s), attempt %d", url, last, attempt + 1)
                    continue
            if resp.status_code in RETRYABLE_STATUS:
                last, status = f"HTTP {resp.status_code}", resp.status_code
                log.warning("request to %s got %s, attempt %d", url, resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}", resp.status_code)
            try:
                return resp.json()
            except ValueError:
                raise ProtocolError(f"non-JSON response from {url}: {resp.text[:120]!r}") from None
        raise TransportError(f"{url}: giving up after {self.config.max_retries + 1} attempts ({last})", status)

    def close(self) -> None:
        self._client.close()


class HTTPChat(_HTTPBase):
    def chat(self, messages: Sequence[Message], label: str = "") -> str:
        payload = {"model": self.config.chat_model, "messages": list(messages),
                   "temperature": self.config.temperature}
        body = self._post(self.config.chat_endpoint, payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProtocolError(f"chat response lacks choices[0].message.content: {str(body)[:200]}") from None
        return content or ""


class HTTPEmbedder(_HTTPBase):
    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("embed() needs at least one text")
        out: list[np.ndarray] = []
        size = self.config.embed_batch_size
        for start in range(0, len(texts), size):
            batch = list(texts[start:start + size])
            body = self._post(self.config.embed_endpoint, {"model": self.config.embed_model, "input": batch})
            try:
                data = sorted(body["data"], key=lambda d: d.get("index", 0))
                vecs = [np.asarray(d["embedding"], dtype=np.float64) for d in data]
            except (KeyError, TypeError, ValueError):
                raise ProtocolError(f"embedding response lacks data[].embedding: {str(body)[:200]}") from None
            if len(vecs) != len(batch):
                raise ProtocolError(f"asked for {len(batch)} embeddings, got {len(vecs)}")
            out.extend(vecs)
        return out


_WORD = re.compile(r"\w+")


class HashEmbedder:
    """Deterministic bag-of-features embedder for offline runs and tests.

    Each case-folded word (weight 1) and each character trigram of a word
    (weight 0.5) maps through a seeded hash to a fixed Gaussian direction; the
    sum is normalised to unit length. Equal normalised strings give equal
    vectors and texts sharing words have positive similarity.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._feature = lru_cache(maxsize=200_000)(self._feature_vector)

    def _feature_vector(self, feature: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.seed}\x00{feature}".encode("utf-8"), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return rng.standard_normal(self.dim)

    def features(self, text: str) -> list[tuple[str, float]]:
        words = _WORD.findall(text.casefold())
        if not words:
            return [("\x01" + " ".join(text.split()).casefold(), 1.0)]
        feats = [("w:" + w, 1.0) for w in words]
        for w in words:
            padded = f"#{w}#"
            feats.extend(("c:" + padded[i:i + 3], 0.5) for i in range(len(padded) - 2))
        return feats

    def embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for feat, weight in self.features(text):
            vec += weight * self._feature(feat)
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else self._feature("\x02") / np.linalg.norm(self._feature("\x02"))

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("embed() needs at least one text")
        return [self.embed_one(t) for t in texts]


def deterministic_test_embedder(text: str, dim: int = 256, seed: int = 0) -> np.ndarray:
    return _default_hash_embedder(dim, seed).embed_one(text)


@lru_cache(maxsize=8)
def _default_hash_embedder(dim: int, seed: int) -> HashEmbedder:
    return HashEmbedder(dim, seed)


@dataclass
class TranscriptEntry:
    fingerprint: str
    response: str
    label: str = ""


class ReplayChat:
    """Replays chat responses from a transcript.

    Transcript JSON: ``{"version": 1, "entries": [{"fingerprint", "label", "response"}]}``
    where the fingerprint is the SHA-256 of the canonical JSON of the message list.
    """

    def __init__(self, entries: Iterable[TranscriptEntry]):
        self.entries = {e.fingerprint: e for e in entries}
        self.hits: list[str] = []

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ReplayChat":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(TranscriptEntry(e["fingerprint"], e["response"], e.get("label", "")) for e in data["entries"])

    def chat(self, messages: Sequence[Message], label: str = "") -> str:
        fp = fingerprint(messages)
        entry = self.entries.get(fp)
        if entry is None:
            raise ReplayMissError(fp, label)
        self.hits.append(fp)
        return entry.response


class RecordingChat:
    """Wraps a responder callable and records every exchange as transcript entries."""

    def __init__(self, responder: Callable[[Sequence[Message], str], str]):
        self.responder = responder
        self.entries: dict[str, TranscriptEntry] = {}

    def chat(self, messages: Sequence[Message], label: str = "") -> str:
        response = self.responder(messages, label)
        fp = fingerprint(messages)
        self.entries[fp] = TranscriptEntry(fp, response, label)
        return response

    def dump(self, path: str | os.PathLike) -> None:
        entries = [vars(e) for e in sorted(self.entries.values(), key=lambda e: (e.label, e.fingerprint))]
        Path(path).write_text(json.dumps({"version": 1, "entries": entries}, ensure_ascii=False, indent=1) + "\n",
                              encoding="utf-8")


# -- gateway ----------------------------------------------------------------

@dataclass
class Gateway:
    chat_backend: ChatBackend
    embed_backend: EmbedBackend
    prompts: PromptLibrary = field(default_factory=PromptLibrary)

    def chat(self, messages: Sequence[Message], label: str = "") -> str:
        return self.chat_backend.chat(messages, label)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return self.embed_backend.embed(texts)

    def complete(self, prompt_name: str, label: str = "", **values: str) -> str:
        """Render a prompt template as a single user message and send it."""
        content = self.prompts.render(prompt_name, **values)
        return self.chat([{"role": "user", "content": content}], label or prompt_name)


def make_gateway(config: GatewayConfig, prompt_dir: str | None = None,
                 transport: httpx.BaseTransport | None = None) -> Gateway:
    config.validate()
    if config.chat_backend == "replay":
        chat: ChatBackend = ReplayChat.from_file(config.transcript)
    else:
        chat = HTTPChat(config, transport)
    if config.embed_backend == "hash":
        embed: EmbedBackend = HashEmbedder(config.hash_dim, config.hash_seed)
    else:
        embed = HTTPEmbedder(config, transport)
    return Gateway(chat, embed, PromptLibrary(prompt_dir or None))


# -- tolerant delimited-record parser ----------------------------------------

DELIM = "<|>"
_BULLET = re.compile(r"^\s*(?:[-*•]+|\d+[.)])\s*")


def parse_records(text: str) -> tuple[list[list[str]], int, int]:
    """Split model output into delimited records.

    Returns ``(records, delimited_lines, stray_lines)``. A record is the list
    of fields of a line containing the delimiter, with the leading kind
    (``entity``, ``relation``...) lower-cased and surrounding quotes, brackets
    and bullets stripped. Lines without the delimiter are counted as stray.
    """
    records: list[list[str]] = []
    delimited = stray = 0
    for raw in text.splitlines():
        line = _BULLET.sub("", raw.strip()).strip()
        if line[:1] in ("(", "[") and line[-1:] in (")", "]"):
            line = line[1:-1].strip()
        while line.endswith(DELIM):
            line = line[: -len(DELIM)].rstrip()
        if not line:
            continue
        if DELIM not in line:
            stray += 1
            continue
        delimited += 1
        fields = [f.strip().strip("\"'`").strip() for f in line.split(DELIM)]
        fields[0] = fields[0].lower().strip("\"'()<> ")
        records.append(fields)
    return records, delimited, stray
