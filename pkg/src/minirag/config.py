"""Layered configuration: defaults < config file < MINIRAG_* env < CLI flags.

Config files are JSON (an optional nested ``"gateway"`` object) or plain
``key = value`` lines, with gateway keys written as ``gateway.<field>``.
Env vars are the upper-cased flat key, e.g. ``MINIRAG_CHUNK_SIZE`` or
``MINIRAG_GATEWAY_CHAT_ENDPOINT``.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

INDEXING_MODES = ("minimal", "descriptive")
RETRIEVAL_MODES = ("full", "no-edge", "no-chunk")
JUDGE_MODES = ("exact", "substring", "llm")
ENV_PREFIX = "MINIRAG_"
DEFAULT_HEDGES = (
    "don't know", "do not know", "not mentioned", "wasn't listed", "was not listed",
    "not listed", "no information", "not provided", "cannot determine", "can't determine",
    "unable to determine", "not specified", "not sure",
)


@dataclass
class GatewayConfig:
    chat_backend: str = "http"  # http | replay
    embed_backend: str = "http"  # http | hash
    chat_endpoint: str = "http://localhost:8000/v1/chat/completions"
    embed_endpoint: str = "http://localhost:8000/v1/embeddings"
    chat_model: str = "phi-3.5-mini-instruct"
    embed_model: str = "all-MiniLM-L6-v2"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    backoff_max: float = 8.0
    retry_wait_ceiling: float = 30.0
    max_inflight: int = 4
    embed_batch_size: int = 128
    temperature: float = 0.0
    transcript: str = ""
    hash_dim: int = 256
    hash_seed: int = 0

    def validate(self) -> None:
        if self.timeout <= 0:
            raise ValueError("gateway.timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("gateway.max_retries must be >= 0")
        if self.max_inflight < 1:
            raise ValueError("gateway.max_inflight must be >= 1")
        if self.embed_batch_size < 1:
            raise ValueError("gateway.embed_batch_size must be >= 1")
        if self.chat_backend not in ("http", "replay"):
            raise ValueError(f"gateway.chat_backend must be http or replay, got {self.chat_backend!r}")
        if self.embed_backend not in ("http", "hash"):
            raise ValueError(f"gateway.embed_backend must be http or hash, got {self.embed_backend!r}")
        if self.chat_backend == "replay" and not self.transcript:
            raise ValueError("gateway.transcript is required for the replay backend")


@dataclass
class AppConfig:
    chunk_size: int = 1200
    overlap: int = 100
    final_chunk_k: int = 5
    max_tokens: int = 6000
    k_hop: int = 2
    path_max_edges: int = 3
    edge_top_k: int = 20
    edge_candidate_hops: int = 1
    paths_per_pair: int = 3
    seed_k: int = 10
    answer_k: int = 10
    chunk_k: int = 10
    indexing_mode: str = "minimal"
    retrieval_mode: str = "full"
    judge_mode: str = "substring"
    hedge_phrases: list[str] = field(default_factory=lambda: list(DEFAULT_HEDGES))
    prompt_dir: str = ""
    gateway: GatewayConfig = field(default_factory=GatewayConfig)

    def validate(self) -> "AppConfig":
        if not 0 <= self.overlap < self.chunk_size:
            raise ValueError("need 0 <= overlap < chunk_size")
        for name in ("final_chunk_k", "max_tokens", "path_max_edges", "edge_top_k", "paths_per_pair",
                     "seed_k", "answer_k", "chunk_k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.k_hop < 0 or self.edge_candidate_hops < 0:
            raise ValueError("hop counts must be >= 0")
        if self.indexing_mode not in INDEXING_MODES:
            raise ValueError(f"indexing_mode must be one of {INDEXING_MODES}")
        if self.retrieval_mode not in RETRIEVAL_MODES:
            raise ValueError(f"retrieval_mode must be one of {RETRIEVAL_MODES}")
        if self.judge_mode not in JUDGE_MODES:
            raise ValueError(f"judge_mode must be one of {JUDGE_MODES}")
        self.gateway.validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AppConfig":
        cfg = cls()
        apply_overrides(cfg, flatten(data))
        return cfg


def flatten(data: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, Mapping):
            out.update(flatten(value, f"{prefix}{key}."))
        else:
            out[f"{prefix}{key}"] = value
    return out


def _fields(obj: Any) -> dict[str, dataclasses.Field]:
    return {f.name: f for f in dataclasses.fields(obj)}


def _coerce(value: Any, default: Any, key: str) -> Any:
    if not isinstance(value, str):
        if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        return value
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, list):
        text = value.strip()
        if text.startswith("["):
            return json.loads(text)
        return [part.strip() for part in text.split(",") if part.strip()]
    return value


def apply_overrides(cfg: AppConfig, flat: Mapping[str, Any]) -> AppConfig:
    for key, value in flat.items():
        target: Any = cfg
        name = key.replace("-", "_")
        if name.startswith("gateway."):
            target, name = cfg.gateway, name[len("gateway."):]
        fields = _fields(target)
        if name not in fields:
            raise KeyError(f"unknown config key {key!r}")
        setattr(target, name, _coerce(value, getattr(target, name), key))
    return cfg


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{source}:{exc.lineno}: {exc.msg}") from None
        return flatten(data)
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    known = {name.upper(): name for name in _fields(AppConfig) if name != "gateway"}
    known.update({f"GATEWAY_{name.upper()}": f"gateway.{name}" for name in _fields(GatewayConfig)})
    out = {}
    for var, value in environ.items():
        if var.startswith(ENV_PREFIX) and var[len(ENV_PREFIX):] in known:
            out[known[var[len(ENV_PREFIX):]]] = value
    return out


def load_config(path: str | os.PathLike | None = None, flags: Mapping[str, Any] | None = None,
                environ: Mapping[str, str] | None = None) -> AppConfig:
    cfg = AppConfig()
    if path:
        p = Path(path)
        data = parse_config_text(p.read_text(encoding="utf-8"), str(p))
        # relative paths inside a config file are relative to that file
        for key in ("gateway.transcript", "prompt_dir"):
            value = data.get(key)
            if isinstance(value, str) and value and not Path(value).is_absolute():
                data[key] = str(p.parent / value)
        apply_overrides(cfg, data)
    apply_overrides(cfg, env_overrides(environ))
    if flags:
        apply_overrides(cfg, {k: v for k, v in flags.items() if v is not None})
    return cfg.validate()
