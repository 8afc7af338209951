"""Index directories and the end-to-end query engine."""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from minirag import graph as graphmod
from minirag.config import AppConfig
from minirag.errors import FormatError
from minirag.gateway import Gateway
from minirag.graph import HeteroGraph
from minirag.indexing import Document, build_index
from minirag.retrieval import (Answer, GroundedSets, QueryPlan, ReasoningPath, RetrievalContext, ScoredEdge,
                               answer, assemble_context, discover_paths, ground, map_query, retrieve_chunks,
                               select_key_edges)
from minirag.vectorstore import VECTOR_FORMAT, VectorStore

FAILURES_FILE = "failures.json"


def directory_bytes(path: str | os.PathLike) -> int:
    return sum(p.stat().st_size for p in Path(path).rglob("*") if p.is_file())


@dataclass
class Index:
    graph: HeteroGraph
    store: VectorStore
    path: Path | None = None

    @classmethod
    def build(cls, corpus: list[Document], cfg: AppConfig, gateway: Gateway,
              out: str | os.PathLike | None = None) -> tuple["Index", dict]:
        """Build (or resume building) an index, saving it to ``out`` when given."""
        graph = store = None
        if out is not None and (Path(out) / graphmod.GRAPH_FILE).exists():
            prev = cls.load(out)
            graph, store = prev.graph, prev.store
        graph, store, report = build_index(corpus, cfg, gateway, graph, store)
        index = cls(graph, store, Path(out) if out is not None else None)
        if out is not None:
            index.save(out)
            (Path(out) / FAILURES_FILE).write_text(json.dumps(report.failures, indent=2) + "\n", encoding="utf-8")
        return index, report.to_dict()

    def save(self, directory: str | os.PathLike) -> None:
        self.graph.meta["vector_format"] = VECTOR_FORMAT
        self.graph.meta["vector_files"] = [f"vectors-{n}.jsonl" for n in sorted(self.store.namespaces)]
        self.store.save(directory)
        graphmod.save(self.graph, directory)
        self.path = Path(directory)

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "Index":
        g = graphmod.load(directory)
        store = VectorStore.load(directory)
        fmt = g.meta.get("vector_format", VECTOR_FORMAT)
        if fmt != VECTOR_FORMAT:
            raise FormatError(f"unsupported vector format {fmt!r}", str(Path(directory) / graphmod.META_FILE))
        return cls(g, store, Path(directory))

    def stats(self) -> dict:
        degrees = [len(self.graph.neighbors(e)) for e in self.graph.entities]
        hist: dict[int, int] = {}
        for d in degrees:
            hist[d] = hist.get(d, 0) + 1
        return {
            **self.graph.counts(),
            "degree_histogram": {str(k): hist[k] for k in sorted(hist)},
            "vector_sizes": self.store.sizes(),
            "bytes_on_disk": directory_bytes(self.path) if self.path is not None else 0,
            "meta": {k: v for k, v in self.graph.meta.items() if k != "indexed_docs"},
        }


@dataclass
class QueryResult:
    plan: QueryPlan
    grounded: GroundedSets
    key_edges: list[ScoredEdge]
    paths: list[ReasoningPath]
    chunks: list[tuple[str, float]]
    context: RetrievalContext
    answer: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "query": self.plan.query,
            "plan": self.plan.to_dict(),
            "grounded": self.grounded.to_dict(),
            "key_edges": [e.to_dict() for e in self.key_edges],
            "paths": [p.to_dict() for p in self.paths],
            "chunks": [[c, s] for c, s in self.chunks],
            "context": self.context.to_dict(),
            "answer": self.answer,
            "diagnostics": self.diagnostics,
        }


class QueryEngine:
    """Read-only over a loaded index; safe to share between threads."""

    def __init__(self, index: Index, gateway: Gateway, cfg: AppConfig):
        self.index = index
        self.gateway = gateway
        self.cfg = cfg

    def retrieve(self, q: str, mode: str | None = None) -> QueryResult:
        mode = mode or self.cfg.retrieval_mode
        g, cfg = self.index.graph, self.cfg
        timings: dict[str, float] = {}
        diag: dict = {"mode": mode}

        t = time.perf_counter()
        plan = map_query(q, self.gateway)
        timings["map_query"] = time.perf_counter() - t

        t = time.perf_counter()
        grounded = ground(plan, g, self.index.store, self.gateway, cfg)
        timings["ground"] = time.perf_counter() - t

        t = time.perf_counter()
        key_edges = select_key_edges(g, grounded, cfg, mode)
        paths = discover_paths(g, grounded, key_edges, cfg)
        timings["paths"] = time.perf_counter() - t

        t = time.perf_counter()
        chunk_scores = retrieve_chunks(g, grounded, paths, self.gateway, cfg, mode, diag)
        chunks = [(g.chunks[c], s) for c, s in chunk_scores]
        answers = [g.entities[e] for e, _ in grounded.answer_candidates]
        context = assemble_context(key_edges, chunks, answers, cfg.max_tokens)
        timings["context"] = time.perf_counter() - t

        diag["warnings"] = plan.warnings
        diag["context"] = context.diagnostics
        diag["timings"] = timings
        return QueryResult(plan, grounded, key_edges, paths, chunk_scores, context, None, diag)

    def query(self, q: str, mode: str | None = None) -> QueryResult:
        result = self.retrieve(q, mode)
        t = time.perf_counter()
        ans: Answer = answer(q, result.context, self.gateway)
        result.diagnostics["timings"]["answer"] = time.perf_counter() - t
        result.answer = ans.text
        return result
