"""Benchmark loading, answer judging and accuracy / error-rate reports.

Chat logs are blocks opened by a ``Time: YYYYMMDD_HH:MM`` header followed by
``Speaker: utterance`` lines. Query files are JSON lines; keys may use either
the field names below or the benchmark's column names ("Question",
"Gold Answer", "Support Documents", "Type").
"""

from __future__ import annotations

import json
import logging
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from minirag.config import DEFAULT_HEDGES
from minirag.errors import MiniRAGError, TransportError
from minirag.gateway import Gateway
from minirag.indexing import Document
from minirag.pipeline import directory_bytes

log = logging.getLogger(__name__)

QTYPES = ("When", "Where", "Who", "What", "How", "YesNo")
HOPS = ("single", "multi")
VERDICTS = ("correct", "wrong", "abstain")

_HEADER = re.compile(r"^\s*\**\s*Time:\s*\**\s*(\S.*?)\s*$")
_TIMESTAMP = re.compile(r"^\d{8}_\d{2}:\d{2}$")
_TURN = re.compile(r"^\s*\**([^:*]{1,60}?)\**\s*:\s*\**\s*(.*)$")
_BOLD = re.compile(r"\\textbf\{([^}]*)\}")


def _clean(line: str) -> str:
    """Drop LaTeX bold wrappers, escaped underscores and trailing ``\\`` breaks."""
    line = _BOLD.sub(r"\1", line).replace("\\_", "_").rstrip()
    while line.endswith("\\"):
        line = line[:-1].rstrip()
    return line


class MalformedRecordWarning(UserWarning):
    pass


@dataclass
class ChatDocument:
    doc_id: str
    time: str
    turns: list[tuple[str, str]] = field(default_factory=list)

    def to_text(self) -> str:
        return "\n".join([f"Time: {self.time}"] + [f"{s}: {u}" for s, u in self.turns])

    def to_document(self) -> Document:
        return Document(self.doc_id, self.to_text())


def _malformed(message: str) -> None:
    log.warning(message)
    warnings.warn(message, MalformedRecordWarning, stacklevel=3)


def parse_chat_log(text: str, source: str = "<text>") -> list[ChatDocument]:
    docs: list[ChatDocument] = []
    blocks: list[tuple[int, str, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _clean(raw)
        m = _HEADER.match(line)
        if m:
            blocks.append((lineno, m.group(1), []))
        elif blocks:
            blocks[-1][2].append(line)
        elif line.strip():
            _malformed(f"{source}:{lineno}: text before the first Time: header ignored")
    for lineno, stamp, lines in blocks:
        if not _TIMESTAMP.match(stamp):
            _malformed(f"{source}:{lineno}: bad timestamp {stamp!r}; block skipped")
            continue
        turns: list[tuple[str, str]] = []
        for line in lines:
            if not line.strip():
                continue
            m = _TURN.match(line)
            if m and m.group(1).strip():
                turns.append((m.group(1).strip(), m.group(2).strip()))
            elif turns:
                speaker, utt = turns[-1]
                turns[-1] = (speaker, f"{utt} {line.strip()}")
        if not turns:
            _malformed(f"{source}:{lineno}: block {stamp} has no turns; skipped")
            continue
        docs.append(ChatDocument(stamp, stamp, turns))
    return docs


def load_corpus(path: str | Path) -> list[ChatDocument]:
    """Chat documents from one file or every ``.txt`` file in a directory.

    Malformed blocks are skipped with a ``MalformedRecordWarning``. Repeated
    timestamps get ``-2``, ``-3``... suffixes so doc ids stay unique.
    """
    path = Path(path)
    files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
    docs: list[ChatDocument] = []
    seen: dict[str, int] = {}
    for f in files:
        for doc in parse_chat_log(f.read_text(encoding="utf-8"), str(f)):
            n = seen.get(doc.time, 0) + 1
            seen[doc.time] = n
            if n > 1:
                doc.doc_id = f"{doc.time}-{n}"
            docs.append(doc)
    return docs


def dump_corpus(docs: Iterable[ChatDocument]) -> str:
    return "\n\n".join(d.to_text() for d in docs) + "\n"


@dataclass
class EvalQuery:
    id: str
    question: str
    gold_answer: str
    support_docs: list[str] | None
    qtype: str
    hops: str = "single"

    def to_dict(self) -> dict:
        return asdict(self)


_ALIASES = {
    "no.": "id", "no": "id", "question": "question", "gold answer": "gold_answer", "gold": "gold_answer",
    "gold_answer": "gold_answer", "support documents": "support_docs", "support_docs": "support_docs",
    "type": "qtype", "qtype": "qtype", "hops": "hops", "id": "id",
}


def _qtype(raw: str) -> str:
    key = re.sub(r"[^a-z]", "", raw.lower())
    for t in QTYPES:
        if key == t.lower():
            return t
    raise ValueError(f"unknown question type {raw!r}")


def _support(raw) -> list[str] | None:
    if raw is None:
        return None
    if isinstance(raw, list):
        items = [str(x).strip() for x in raw]
    else:
        text = str(raw).replace("\\_", "_")
        items = [p.strip() for p in re.split(r"<and>|\s+and\s+|[,;]", text)]
    items = [i for i in items if i]
    if not items or items == ["NA"]:
        return None
    return items


def parse_query_record(rec: dict, default_id: str) -> EvalQuery:
    norm = {_ALIASES[k.strip().lower()]: v for k, v in rec.items() if k.strip().lower() in _ALIASES}
    question = str(norm.get("question", "")).strip()
    gold = str(norm.get("gold_answer", "")).strip()
    if not question or not gold:
        raise ValueError("question and gold_answer must be non-empty")
    support = _support(norm.get("support_docs"))
    hops = str(norm.get("hops") or ("multi" if support and len(support) > 1 else "single")).lower()
    if hops not in HOPS:
        raise ValueError(f"hops must be single or multi, got {hops!r}")
    return EvalQuery(str(norm.get("id", default_id)), question, gold, support, _qtype(str(norm.get("qtype", ""))), hops)


def load_queries(path: str | Path) -> list[EvalQuery]:
    out = []
    path = Path(path)
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict):
                raise ValueError("not a JSON object")
            out.append(parse_query_record(rec, str(len(out) + 1)))
        except ValueError as exc:
            _malformed(f"{path}:{lineno}: {exc}; query skipped")
    return out


# -- judging ----------------------------------------------------------------------

@dataclass
class JudgedOutcome:
    verdict: str
    judge_mode: str
    rationale: str = ""


def _fold(text: str) -> str:
    return " ".join(text.split()).casefold()


def is_abstention(response: str, hedges: Sequence[str]) -> str | None:
    folded = _fold(response.replace("’", "'"))
    for h in hedges:
        if _fold(h) in folded:
            return h
    return None


def judge(response: str, gold: str, mode: str = "substring", gateway: Gateway | None = None,
          hedges: Sequence[str] | None = None, question: str = "") -> JudgedOutcome:
    """Abstentions are detected first. ``llm`` mode raises TransportError when
    the judge model cannot be reached."""
    hedge = is_abstention(response, DEFAULT_HEDGES if hedges is None else hedges)
    if hedge is not None:
        return JudgedOutcome("abstain", mode, f"hedge phrase {hedge!r}")
    if mode == "exact":
        ok = _fold(response) == _fold(gold)
    elif mode == "substring":
        ok = _fold(gold) in _fold(response)
    elif mode == "llm":
        if gateway is None:
            raise ValueError("llm judge needs a gateway")
        reply = gateway.complete("judge", label=f"judge:{question}", query=question, gold=gold, response=response)
        words = re.findall(r"[a-z]+", reply.lower())
        ok = bool(words) and words[0] == "yes"
        return JudgedOutcome("correct" if ok else "wrong", mode, reply.strip()[:200])
    else:
        raise ValueError(f"unknown judge mode {mode!r}")
    return JudgedOutcome("correct" if ok else "wrong", mode)


# -- reports ----------------------------------------------------------------------

@dataclass
class Tally:
    total: int = 0
    correct: int = 0
    wrong: int = 0
    abstain: int = 0
    unjudged: int = 0

    def add(self, verdict: str | None) -> None:
        self.total += 1
        if verdict is None:
            self.unjudged += 1
        else:
            setattr(self, verdict, getattr(self, verdict) + 1)

    @property
    def judged(self) -> int:
        return self.total - self.unjudged

    def rates(self) -> dict:
        d = self.judged
        pct = (lambda n: round(100.0 * n / d, 2)) if d else (lambda n: None)
        return {**asdict(self), "acc": pct(self.correct), "err": pct(self.wrong), "abstain_rate": pct(self.abstain)}


def summarize(records: Sequence[dict]) -> dict:
    """Rates in percent over judged queries, overall and sliced by qtype and hops."""
    if not records:
        raise ValueError("no queries to evaluate")
    overall = Tally()
    by_qtype: dict[str, Tally] = {}
    by_hops: dict[str, Tally] = {}
    for r in records:
        v = r.get("verdict")
        overall.add(v)
        by_qtype.setdefault(r["qtype"], Tally()).add(v)
        by_hops.setdefault(r["hops"], Tally()).add(v)
    return {"overall": overall.rates(),
            "by_qtype": {k: by_qtype[k].rates() for k in sorted(by_qtype)},
            "by_hops": {k: by_hops[k].rates() for k in sorted(by_hops)}}


def run_eval(engine, queries: Sequence[EvalQuery], judge_mode: str = "substring",
             judge_gateway: Gateway | None = None, hedges: Sequence[str] | None = None,
             workers: int = 1) -> dict:
    """Answer every query with ``engine`` (a QueryEngine) and judge it.

    Per-query failures are recorded as unjudged with the error text; the run
    continues. The report carries the index's on-disk size when known.
    """
    if not queries:
        raise ValueError("no queries to evaluate")
    hedges = engine.cfg.hedge_phrases if hedges is None else hedges

    def one(q: EvalQuery) -> dict:
        rec = {**q.to_dict(), "answer": None, "context": None, "verdict": None, "rationale": "", "error": None}
        try:
            res = engine.query(q.question)
        except MiniRAGError as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
            return rec
        rec["answer"] = res.answer
        rec["context"] = res.context.rendered
        rec["retrieved_docs"] = sorted({c.doc_id for c, _ in res.context.chunks})
        try:
            out = judge(res.answer or "", q.gold_answer, judge_mode, judge_gateway, hedges, q.question)
        except TransportError as exc:
            rec["error"] = f"judge unavailable: {exc}"
            return rec
        rec["verdict"], rec["rationale"] = out.verdict, out.rationale
        return rec

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, queries))
    else:
        records = [one(q) for q in queries]
    report = {"judge_mode": judge_mode, **summarize(records), "records": records}
    path = getattr(engine.index, "path", None)
    if path is not None:
        report["index_bytes"] = directory_bytes(path)
    return report
