"""A twelve-conversation toy benchmark with a scripted model.

``script.json`` holds, for every document, the entity and relation records a
well-behaved small model would emit, in both extraction modes (a short note
versus a full prose description), plus the query mappings and answers for
``queries.jsonl``. :func:`responder` turns that script into chat replies so a
:class:`~minirag.gateway.RecordingChat` can produce ``transcript.json``, which
the replay backend then serves offline.
"""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

from minirag.gateway import DELIM

TOY_DIR = Path(str(resources.files(__name__)))
CORPUS_DIR = TOY_DIR / "corpus"
QUERIES_FILE = TOY_DIR / "queries.jsonl"
SCRIPT_FILE = TOY_DIR / "script.json"
TRANSCRIPT_FILE = TOY_DIR / "transcript.json"
CONFIG_FILE = TOY_DIR / "config.json"

ABSTAIN = "I don't know; the notes above do not mention it."


@lru_cache(maxsize=1)
def script() -> dict:
    return json.loads(SCRIPT_FILE.read_text(encoding="utf-8"))


def extraction_reply(doc_id: str, mode: str) -> str:
    doc = script()["documents"][doc_id]
    lines = []
    for name, etype, note, desc in doc["entities"]:
        lines.append(DELIM.join(["entity", name, etype, note if mode == "minimal" else desc]))
    for src, dst, label, desc in doc["relations"]:
        fields = ["relation", src, dst, label] + ([] if mode == "minimal" else [desc])
        lines.append(DELIM.join(fields))
    return "\n".join(lines)


def _query(question: str) -> dict:
    for q in script()["queries"]:
        if q["question"] == question:
            return q
    raise KeyError(f"question not in the toy script: {question!r}")


def mapping_reply(question: str) -> str:
    m = _query(question)["mapping"]
    lines = [DELIM.join(["answer_type", t]) for t in m["answer_types"]]
    lines += [DELIM.join(["entity", name, etype]) for name, etype in m["entities"]]
    return "\n".join(lines)


def answer_reply(question: str, prompt: str) -> str:
    """The scripted answer when a supporting conversation made it into the
    context, otherwise an abstention."""
    q = _query(question)
    if any(f"[{doc}#" in prompt for doc in q["support_docs"]):
        return q["answer"]
    return ABSTAIN


def responder(messages: Sequence[dict], label: str) -> str:
    kind, _, rest = label.partition(":")
    if kind == "extract":
        mode, _, chunk = rest.partition(":")
        m = re.fullmatch(r"chunk-(.+)-(\d+)", chunk)
        if m is None:
            raise KeyError(f"unexpected chunk id in label {label!r}")
        return extraction_reply(m.group(1), mode)
    if kind == "map":
        return mapping_reply(rest)
    if kind == "answer":
        return answer_reply(rest, messages[-1]["content"])
    raise KeyError(f"no scripted reply for label {label!r}")
