"""Corpus to heterogeneous graph: chunking, per-chunk extraction, upsert, embedding."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from minirag.config import AppConfig
from minirag.errors import FormatError, MiniRAGError
from minirag.gateway import DELIM, Gateway, parse_records
from minirag.graph import ChunkNode, HeteroGraph, check_integrity, chunk_id, normalize_name
from minirag.vectorstore import VectorStore

log = logging.getLogger(__name__)

ENTITY_TYPES = ("PERSON", "LOCATION", "ORGANIZATION", "EVENT", "TIME", "OBJECT",
                "SOCIAL INTERACTION", "CONCEPT")
ENTITY_NS = "entities"
CHUNK_NS = "chunks"


@dataclass
class Document:
    doc_id: str
    text: str
    source_path: str | None = None


@dataclass
class Chunk:
    doc_id: str
    ordinal: int
    text: str
    token_span: tuple[int, int]

    @property
    def id(self) -> str:
        return chunk_id(self.doc_id, self.ordinal)


@dataclass
class ExtractedEntity:
    name: str
    entity_type: str
    description: str = ""


@dataclass
class ExtractedRelation:
    src: str
    dst: str
    label: str
    description: str = ""


@dataclass
class ExtractionResult:
    entities: list[ExtractedEntity] = field(default_factory=list)
    relations: list[ExtractedRelation] = field(default_factory=list)
    warnings: int = 0
    diagnostics: list[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        self.warnings += 1
        self.diagnostics.append(message)
        log.warning(message)


_TOKEN = re.compile(r"\S+")


def tokenize(text: str) -> list[str]:
    return text.split()


def chunk_document(doc: Document, chunk_size: int = 1200, overlap: int = 100) -> list[Chunk]:
    """Fixed windows of whitespace tokens advancing by ``chunk_size - overlap``.

    Chunk text is the original slice of the document, so line breaks survive.
    """
    if not 0 <= overlap < chunk_size:
        raise ValueError("need 0 <= overlap < chunk_size")
    tokens = [m.span() for m in _TOKEN.finditer(doc.text)]
    chunks: list[Chunk] = []
    start = 0
    while start < len(tokens):
        end = min(start + chunk_size, len(tokens))
        text = doc.text[tokens[start][0]:tokens[end - 1][1]]
        chunks.append(Chunk(doc.doc_id, len(chunks), text, (start, end)))
        if end == len(tokens):
            break
        start += chunk_size - overlap
    return chunks


def parse_extraction(text: str, known_entities: Iterable[str] = ()) -> ExtractionResult:
    """Parse delimited extraction output, dropping malformed items with a warning each.

    Output with no usable record at all counts as a single warning.
    """
    result = ExtractionResult()
    records, _, _ = parse_records(text)
    pending: list[list[str]] = []
    for rec in records:
        kind = rec[0]
        if kind == "entity" and len(rec) >= 3 and rec[1] and rec[2]:
            desc = " ".join(rec[3:]).strip() if len(rec) > 3 else ""
            result.entities.append(ExtractedEntity(" ".join(rec[1].split()), rec[2].upper(), desc))
        elif kind == "relation" and len(rec) >= 4 and rec[1] and rec[2]:
            pending.append(rec)
        else:
            result.warn(f"malformed record dropped: {DELIM.join(rec)[:80]!r}")
    names = {normalize_name(e.name) for e in result.entities} | set(known_entities)
    for rec in pending:
        src, dst = normalize_name(rec[1]), normalize_name(rec[2])
        if src not in names or dst not in names:
            result.warn(f"relation {rec[1]!r} -> {rec[2]!r} references an unknown entity; dropped")
            continue
        if src == dst:
            result.warn(f"relation {rec[1]!r} is a self-loop; dropped")
            continue
        desc = " ".join(rec[4:]).strip() if len(rec) > 4 else ""
        result.relations.append(ExtractedRelation(" ".join(rec[1].split()), " ".join(rec[2].split()), rec[3], desc))
    if not result.entities and not result.relations and result.warnings == 0:
        result.warn("model output contained no parseable records")
    return result


def extract_from_chunk(chunk: Chunk, gateway: Gateway, mode: str = "minimal",
                       known_entities: Iterable[str] = ()) -> ExtractionResult:
    if mode not in ("minimal", "descriptive"):
        raise ValueError(f"unknown extraction mode {mode!r}")
    raw = gateway.complete(f"extraction_{mode}", label=f"extract:{mode}:{chunk.id}",
                           input_text=chunk.text, entity_types=", ".join(ENTITY_TYPES))
    return parse_extraction(raw, known_entities)


@dataclass
class BuildReport:
    indexed: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    warnings: int = 0

    def to_dict(self) -> dict:
        return {"indexed": self.indexed, "skipped": self.skipped, "failures": self.failures,
                "warnings": self.warnings}


def _extract_document(doc: Document, gateway: Gateway, cfg: AppConfig,
                      known: frozenset[str]) -> tuple[list[Chunk], list[ExtractionResult]]:
    chunks = chunk_document(doc, cfg.chunk_size, cfg.overlap)
    return chunks, [extract_from_chunk(c, gateway, cfg.indexing_mode, known) for c in chunks]


def _apply(graph: HeteroGraph, chunks: list[Chunk], results: list[ExtractionResult]) -> None:
    for chunk, res in zip(chunks, results):
        graph.add_chunk(ChunkNode(chunk.id, chunk.doc_id, chunk.ordinal, chunk.text, len(tokenize(chunk.text))))
        for ent in res.entities:
            graph.upsert_entity(ent.name, ent.entity_type, chunk.id, ent.description)
        for rel in res.relations:
            graph.add_entity_edge(rel.src, rel.dst, rel.label, rel.description)


def build_index(corpus: Iterable[Document], cfg: AppConfig, gateway: Gateway,
                graph: HeteroGraph | None = None, store: VectorStore | None = None,
                ) -> tuple[HeteroGraph, VectorStore, BuildReport]:
    """Index ``corpus`` into ``graph``/``store`` (fresh ones when not given).

    Documents whose id is already in ``graph.meta["indexed_docs"]`` are
    skipped, so a partially built index can be resumed. A document whose
    extraction fails is reported and left out entirely; the build continues.
    Extraction runs on up to ``gateway.max_inflight`` documents at once but
    results are applied to the graph in corpus order.
    """
    graph = graph if graph is not None else HeteroGraph()
    store = store if store is not None else VectorStore()
    report = BuildReport()
    done = set(graph.meta.get("indexed_docs", []))
    todo: list[Document] = []
    seen: set[str] = set()
    for doc in corpus:
        if doc.doc_id in done:
            report.skipped.append(doc.doc_id)
        elif doc.doc_id in seen:
            report.failures.append({"doc_id": doc.doc_id, "error": "duplicate doc_id in corpus"})
        else:
            seen.add(doc.doc_id)
            todo.append(doc)

    known = frozenset(graph.entities)
    workers = max(1, cfg.gateway.max_inflight)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_extract_document, doc, gateway, cfg, known) for doc in todo]
        for doc, fut in zip(todo, futures):
            try:
                chunks, results = fut.result()
            except MiniRAGError as exc:
                log.warning("extraction failed for %s: %s", doc.doc_id, exc)
                report.failures.append({"doc_id": doc.doc_id, "error": f"{type(exc).__name__}: {exc}"})
                continue
            _apply(graph, chunks, results)
            report.warnings += sum(r.warnings for r in results)
            report.indexed.append(doc.doc_id)

    _embed_new(graph, store, gateway)
    graph.meta.update({
        "chunk_size": cfg.chunk_size,
        "overlap": cfg.overlap,
        "indexing_mode": cfg.indexing_mode,
        "chat_model": cfg.gateway.chat_model if cfg.gateway.chat_backend == "http" else "replay",
        "embed_model": cfg.gateway.embed_model if cfg.gateway.embed_backend == "http" else
        f"hash-{cfg.gateway.hash_dim}-seed{cfg.gateway.hash_seed}",
        "tokenizer": "whitespace",
        "indexed_docs": sorted(done | set(report.indexed)),
    })
    check_integrity(graph, require_descriptions=False)
    return graph, store, report


def _embed_new(graph: HeteroGraph, store: VectorStore, gateway: Gateway) -> None:
    ents = store.namespace(ENTITY_NS)
    chunks = store.namespace(CHUNK_NS)
    new_ents = [eid for eid in sorted(graph.entities) if eid not in ents]
    new_chunks = [cid for cid in sorted(graph.chunks) if cid not in chunks]
    if new_ents:
        vecs = gateway.embed([graph.entities[e].name for e in new_ents])
        ents.add_many(zip(new_ents, vecs))
    if new_chunks:
        vecs = gateway.embed([graph.chunks[c].text for c in new_chunks])
        chunks.add_many(zip(new_chunks, vecs))


def load_documents(path: str | Path) -> list[Document]:
    """A directory of ``.txt`` files (doc_id = stem) or a JSON-lines file of ``{doc_id, text}``."""
    path = Path(path)
    if path.is_dir():
        docs = [Document(p.stem, p.read_text(encoding="utf-8"), str(p)) for p in sorted(path.glob("*.txt"))]
        return [d for d in docs if d.text.strip()]
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                docs.append(Document(str(rec["doc_id"]), rec["text"], str(path)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"bad corpus record: {exc}", str(path), lineno) from None
    return [d for d in docs if d.text.strip()]
