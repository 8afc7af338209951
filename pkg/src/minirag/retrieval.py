"""Query-time pipeline over a built index.

Query entities and answer types come from the chat model; everything after
that is embedding lookups plus graph topology:

1. ground query entities to seed entities, type-matched answer candidates and
   query-similar chunks;
2. score entity edges by how many seeds/answers sit in their k-hop
   neighbourhood and keep the best as key edges;
3. enumerate short simple paths from every seed, score each path by
   seed relevance times (1 + answers on the path + key-edge scores on the path);
4. keep chunks that are both query-similar and linked to a path entity,
   re-rank them on chunk text plus the linking edge descriptions;
5. render answer candidates, key edges and chunks under a token budget.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from minirag.config import AppConfig
from minirag.gateway import Gateway, parse_records
from minirag.graph import (ChunkNode, EdgeKey, EntityEdge, EntityNode, HeteroGraph, NodeId,
                           enumerate_acyclic_paths, k_hop_subgraph, normalize_name, path_edges,
                           within_hops)
from minirag.indexing import CHUNK_NS, ENTITY_NS, ENTITY_TYPES
from minirag.vectorstore import VectorStore, cosine_similarity

log = logging.getLogger(__name__)


@dataclass
class QueryPlan:
    query: str
    query_entities: list[tuple[str, str]] = field(default_factory=list)
    answer_types: list[str] = field(default_factory=list)
    warnings: int = 0

    def to_dict(self) -> dict:
        return {"query": self.query, "query_entities": [list(e) for e in self.query_entities],
                "answer_types": self.answer_types, "warnings": self.warnings}


@dataclass
class GroundedSets:
    seeds: list[tuple[NodeId, float]] = field(default_factory=list)
    answer_candidates: list[tuple[NodeId, float]] = field(default_factory=list)
    candidate_chunks: list[tuple[NodeId, float]] = field(default_factory=list)
    seed_matches: dict[str, list[tuple[NodeId, float]]] = field(default_factory=dict)
    query_vector: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def seed_ids(self) -> set[NodeId]:
        return {n for n, _ in self.seeds}

    @property
    def answer_ids(self) -> set[NodeId]:
        return {n for n, _ in self.answer_candidates}

    @property
    def chunk_ids(self) -> set[NodeId]:
        return {n for n, _ in self.candidate_chunks}

    def to_dict(self) -> dict:
        pairs = lambda xs: [[n, s] for n, s in xs]  # noqa: E731
        return {"seeds": pairs(self.seeds), "answer_candidates": pairs(self.answer_candidates),
                "candidate_chunks": pairs(self.candidate_chunks),
                "seed_matches": {q: pairs(m) for q, m in self.seed_matches.items()}}


@dataclass
class ScoredEdge:
    edge: EntityEdge
    omega_e: int

    def to_dict(self) -> dict:
        return {"src": self.edge.src, "dst": self.edge.dst, "relation": self.edge.relation,
                "description": self.edge.description, "omega_e": self.omega_e}


@dataclass
class ReasoningPath:
    nodes: tuple[NodeId, ...]
    conditioned_on: str
    omega_p: float

    @property
    def seed(self) -> NodeId:
        return self.nodes[0]

    def to_dict(self) -> dict:
        return {"nodes": list(self.nodes), "conditioned_on": self.conditioned_on, "omega_p": self.omega_p}


@dataclass
class RetrievalContext:
    key_edges: list[ScoredEdge]
    chunks: list[tuple[ChunkNode, float]]
    answer_entities: list[EntityNode]
    rendered: str
    token_count: int
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "key_edges": [e.to_dict() for e in self.key_edges],
            "chunks": [{"id": c.id, "doc_id": c.doc_id, "ordinal": c.ordinal, "score": s} for c, s in self.chunks],
            "answer_entities": [{"id": e.id, "name": e.name, "entity_type": e.entity_type}
                                for e in self.answer_entities],
            "rendered": self.rendered,
            "token_count": self.token_count,
            "diagnostics": self.diagnostics,
        }


def _type_label(text: str) -> str:
    return " ".join(text.split()).upper()


def _by_score(items: Iterable[tuple[str, float]]) -> list[tuple[str, float]]:
    return sorted(items, key=lambda kv: (-kv[1], kv[0]))


# -- query mapping ------------------------------------------------------------

def parse_query_plan(query: str, text: str) -> QueryPlan:
    plan = QueryPlan(query)
    records, _, _ = parse_records(text)
    seen: set[str] = set()
    for rec in records:
        if rec[0] in ("answer_type", "answer type", "answer") and len(rec) >= 2 and rec[1]:
            label = _type_label(rec[1])
            if label not in plan.answer_types:
                plan.answer_types.append(label)
        elif rec[0] == "entity" and len(rec) >= 2 and rec[1]:
            name = normalize_name(rec[1])
            if name not in seen:
                seen.add(name)
                plan.query_entities.append((name, _type_label(rec[2]) if len(rec) > 2 else ""))
        else:
            plan.warnings += 1
    return plan


def map_query(q: str, gateway: Gateway) -> QueryPlan:
    if not q.strip():
        return QueryPlan(q)
    raw = gateway.complete("query_mapping", label=f"map:{q}", query=q, entity_types=", ".join(ENTITY_TYPES))
    return parse_query_plan(q, raw)


# -- grounding ------------------------------------------------------------------

def ground(plan: QueryPlan, graph: HeteroGraph, store: VectorStore, gateway: Gateway,
           cfg: AppConfig) -> GroundedSets:
    """Seeds per query entity (merged keeping max score), answer candidates by type
    and whole-query similarity, candidate chunks by whole-query similarity."""
    out = GroundedSets()
    if not plan.query.strip() or (not graph.entities and not graph.chunks):
        return out
    texts = [plan.query] + [name for name, _ in plan.query_entities]
    vecs = gateway.embed(texts)
    out.query_vector = vecs[0]
    ents = store.namespace(ENTITY_NS)
    entity_keys = [e for e in sorted(graph.entities) if e in ents]
    if entity_keys:
        best: dict[NodeId, float] = {}
        for (name, _), vec in zip(plan.query_entities, vecs[1:]):
            matches = ents.top_k(vec, cfg.seed_k, keys=entity_keys)
            out.seed_matches[name] = matches
            for node, score in matches:
                best[node] = max(score, best.get(node, -2.0))
        out.seeds = _by_score(best.items())
        types = {_type_label(t) for t in plan.answer_types}
        pool = [e for e in entity_keys if graph.entities[e].entity_type in types] if types else entity_keys
        if pool:
            out.answer_candidates = ents.top_k(out.query_vector, cfg.answer_k, keys=pool)
    chunks = store.namespace(CHUNK_NS)
    chunk_keys = [c for c in sorted(graph.chunks) if c in chunks]
    if chunk_keys:
        out.candidate_chunks = chunks.top_k(out.query_vector, cfg.chunk_k, keys=chunk_keys)
    return out


# -- key edges --------------------------------------------------------------------

def score_edge(graph: HeteroGraph, edge: EntityEdge | EdgeKey, seeds: Iterable[NodeId],
               answers: Iterable[NodeId], k: int) -> int:
    """Seeds plus answers inside the k-hop neighbourhood of ``edge``.

    A node in both sets counts once for each.
    """
    region = k_hop_subgraph(graph, edge, k)
    return sum(1 for s in set(seeds) if s in region) + sum(1 for a in set(answers) if a in region)


def select_key_edges(graph: HeteroGraph, grounded: GroundedSets, cfg: AppConfig,
                     mode: str = "full") -> list[ScoredEdge]:
    if mode == "no-edge":
        return []
    seeds, answers = grounded.seed_ids, grounded.answer_ids
    anchors = seeds | answers
    if not anchors:
        return []
    near = within_hops(graph, anchors, cfg.edge_candidate_hops)
    scored = []
    for key, edge in graph.entity_edges.items():
        if key[0] in near or key[1] in near:
            omega = score_edge(graph, key, seeds, answers, cfg.k_hop)
            if omega > 0:
                scored.append(ScoredEdge(edge, omega))
    scored.sort(key=lambda se: (-se.omega_e, se.edge.key))
    return scored[:cfg.edge_top_k]


# -- paths --------------------------------------------------------------------------

def score_path(path: Sequence[NodeId], omega_v: float, answers: Iterable[NodeId],
               key_edges: Mapping[EdgeKey, int]) -> float:
    """``omega_v * (1 + |answers on path| + sum of key-edge scores along the path)``."""
    on_path = len(set(path) & set(answers))
    edge_sum = sum(key_edges.get(e, 0) for e in path_edges(list(path)))
    return omega_v * (1 + on_path + edge_sum)


def clamp01(x: float) -> float:
    return min(1.0, max(0.0, float(x)))


def discover_paths(graph: HeteroGraph, grounded: GroundedSets, key_edges: Sequence[ScoredEdge],
                   cfg: AppConfig) -> list[ReasoningPath]:
    """Top ``paths_per_pair`` paths per (query entity, seed) pair, merged across pairs
    keeping each distinct node sequence once at its highest score."""
    answers = grounded.answer_ids
    edge_scores = {se.edge.key: se.omega_e for se in key_edges}
    cache: dict[NodeId, list[list[NodeId]]] = {}
    best: dict[tuple[NodeId, ...], ReasoningPath] = {}
    for v_q, matches in grounded.seed_matches.items():
        for seed, sim in matches:
            if seed not in cache:
                cache[seed] = enumerate_acyclic_paths(graph, seed, cfg.path_max_edges)
            omega_v = clamp01(sim)
            ranked = sorted(((score_path(p, omega_v, answers, edge_scores), tuple(p)) for p in cache[seed]),
                            key=lambda sp: (-sp[0], sp[1]))
            for score, nodes in ranked[:cfg.paths_per_pair]:
                held = best.get(nodes)
                if held is None or score > held.omega_p:
                    best[nodes] = ReasoningPath(nodes, v_q, score)
    return sorted(best.values(), key=lambda p: (-p.omega_p, p.nodes))


# -- chunks -------------------------------------------------------------------------

def path_chunks(graph: HeteroGraph, paths: Iterable[ReasoningPath]) -> tuple[set[NodeId], set[NodeId]]:
    """Entities on any path, and the chunks linked to them by provenance edges."""
    entities = {n for p in paths for n in p.nodes}
    chunks = {c for e in entities for c in graph.chunks_of(e)}
    return entities, chunks


def retrieve_chunks(graph: HeteroGraph, grounded: GroundedSets, paths: Sequence[ReasoningPath],
                    gateway: Gateway, cfg: AppConfig, mode: str = "full",
                    diagnostics: dict | None = None) -> list[tuple[NodeId, float]]:
    diag = diagnostics if diagnostics is not None else {}
    diag.setdefault("fallback_used", False)
    if mode == "no-chunk":
        return grounded.candidate_chunks[:cfg.final_chunk_k]
    candidates = grounded.chunk_ids
    path_entities, linked = path_chunks(graph, paths)
    pool = candidates & linked
    if not pool and candidates:
        pool = set(candidates)
        diag["fallback_used"] = True
    if not pool:
        return []
    ordered = sorted(pool)
    contents = []
    for cid in ordered:
        descs = [graph.entity_chunk_edges[(e, cid)].description for e in sorted(path_entities)
                 if (e, cid) in graph.entity_chunk_edges]
        descs = [" ".join(d.split()) for d in descs if d.strip()]
        text = graph.chunks[cid].text
        contents.append(text + " " + " ".join(descs) if descs else text)
    vecs = gateway.embed(contents)
    q = grounded.query_vector
    scored = [(cid, cosine_similarity(q, v)) for cid, v in zip(ordered, vecs)]
    return _by_score(scored)[:cfg.final_chunk_k]


# -- context ------------------------------------------------------------------------

def count_tokens(text: str) -> int:
    return len(text.split())


def _render(entities: Sequence[EntityNode], edges: Sequence[ScoredEdge],
            chunks: Sequence[tuple[ChunkNode, float]]) -> str:
    parts = []
    if entities:
        parts.append("-----Answer candidates-----")
        parts.extend(f"- {e.name} ({e.entity_type})" for e in entities)
    if edges:
        parts.append("-----Key relationships-----")
        for se in edges:
            e = se.edge
            line = f"- {e.src} -[{e.relation or 'related to'}]-> {e.dst}"
            if e.description:
                line += ": " + " ".join(e.description.split())
            parts.append(line)
    if chunks:
        parts.append("-----Sources-----")
        parts.extend(f"[{c.doc_id}#{c.ordinal}] {c.text}" for c, _ in chunks)
    return "\n".join(parts)


def assemble_context(key_edges: Sequence[ScoredEdge], chunks: Sequence[tuple[ChunkNode, float]],
                     answer_entities: Sequence[EntityNode], budget: int = 6000) -> RetrievalContext:
    """Render under ``budget`` whitespace tokens, dropping whole items lowest-ranked
    first: chunks, then edges, then answer candidates."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    chunks = sorted(chunks, key=lambda cs: (-cs[1], cs[0].id))
    ents, edges, kept = list(answer_entities), list(key_edges), list(chunks)
    diag: list[str] = []
    text = _render(ents, edges, kept)
    while count_tokens(text) > budget:
        if kept:
            kept.pop()
        elif edges:
            edges.pop()
        elif ents:
            ents.pop()
        else:
            break
        text = _render(ents, edges, kept)
    if len(kept) < len(chunks):
        diag.append(f"dropped {len(chunks) - len(kept)} of {len(chunks)} chunks to fit {budget} tokens")
        if not kept:
            diag.append("budget too small for any chunk; context has entities/edges only")
    if len(edges) < len(key_edges):
        diag.append(f"dropped {len(key_edges) - len(edges)} of {len(key_edges)} key edges")
    if len(ents) < len(answer_entities):
        diag.append(f"dropped {len(answer_entities) - len(ents)} of {len(answer_entities)} answer candidates")
    return RetrievalContext(edges, kept, ents, text, count_tokens(text), diag)


# -- answer -------------------------------------------------------------------------

@dataclass
class Answer:
    text: str
    context: RetrievalContext


def answer(q: str, context: RetrievalContext, gateway: Gateway) -> Answer:
    raw = gateway.complete("answering", label=f"answer:{q}", context=context.rendered, query=q)
    return Answer(raw.strip(), context)
