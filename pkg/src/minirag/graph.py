"""Heterogeneous chunk/entity graph, its persistence, and the path algorithms
retrieval is built on.

Entity-entity edges are undirected. All hop counts and paths run over
entity-entity edges only; entity-chunk edges carry provenance, not reasoning.
"""

from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Iterator, Union

import jsonschema

from minirag.errors import FormatError, IntegrityError, NotFoundError

SCHEMA_VERSION = 1
GRAPH_FILE = "graph.json"
META_FILE = "meta.json"

NodeId = str
EdgeKey = tuple[str, str]


def normalize_name(name: str) -> NodeId:
    """Case-fold and collapse whitespace; this is an entity's identity."""
    return " ".join(name.split()).casefold()


def chunk_id(doc_id: str, ordinal: int) -> NodeId:
    return f"chunk-{doc_id}-{ordinal}"


def edge_key(a: str, b: str) -> EdgeKey:
    return (a, b) if a <= b else (b, a)


@dataclass
class EntityNode:
    id: NodeId
    name: str
    entity_type: str
    source_chunks: list[NodeId] = field(default_factory=list)


@dataclass
class ChunkNode:
    id: NodeId
    doc_id: str
    ordinal: int
    text: str
    token_count: int


@dataclass
class EntityEdge:
    src: NodeId
    dst: NodeId
    relation: str = ""
    description: str = ""
    weight: float = 1.0

    @property
    def key(self) -> EdgeKey:
        return edge_key(self.src, self.dst)


@dataclass
class EntityChunkEdge:
    entity: NodeId
    chunk: NodeId
    description: str = ""


EdgeLike = Union[EntityEdge, EdgeKey]


def _key_of(edge: EdgeLike) -> EdgeKey:
    if isinstance(edge, EntityEdge):
        return edge.key
    a, b = edge
    return edge_key(a, b)


@dataclass
class HeteroGraph:
    """Chunk nodes, entity nodes, entity-entity and entity-chunk edges.

    ``entity_edges`` is keyed by the sorted endpoint pair and
    ``entity_chunk_edges`` by ``(entity, chunk)``, so both behave as sets.
    The adjacency index is derived state and excluded from equality.
    """

    entities: dict[NodeId, EntityNode] = field(default_factory=dict)
    chunks: dict[NodeId, ChunkNode] = field(default_factory=dict)
    entity_edges: dict[EdgeKey, EntityEdge] = field(default_factory=dict)
    entity_chunk_edges: dict[tuple[NodeId, NodeId], EntityChunkEdge] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)
    _adj: dict[NodeId, set[NodeId]] = field(default_factory=dict, repr=False, compare=False)
    _chunk_links: dict[NodeId, set[NodeId]] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._reindex()

    def _reindex(self) -> None:
        self._adj = {eid: set() for eid in self.entities}
        for a, b in self.entity_edges:
            self._adj.setdefault(a, set()).add(b)
            self._adj.setdefault(b, set()).add(a)
        self._chunk_links = {}
        for ent, ch in self.entity_chunk_edges:
            self._chunk_links.setdefault(ent, set()).add(ch)

    # -- construction -----------------------------------------------------

    def add_chunk(self, chunk: ChunkNode) -> NodeId:
        if not chunk.text:
            raise IntegrityError(f"chunk {chunk.id} has empty text")
        self.chunks[chunk.id] = chunk
        return chunk.id

    def upsert_entity(self, name: str, entity_type: str, source_chunk: NodeId,
                      description: str = "") -> NodeId:
        if source_chunk not in self.chunks:
            raise IntegrityError(f"unknown source chunk {source_chunk!r}")
        eid = normalize_name(name)
        if not eid:
            raise ValueError("entity name is empty")
        node = self.entities.get(eid)
        if node is None:
            etype = " ".join(entity_type.split()).upper() or "UNKNOWN"
            node = EntityNode(eid, " ".join(name.split()), etype, [])
            self.entities[eid] = node
            self._adj.setdefault(eid, set())
        if source_chunk not in node.source_chunks:
            node.source_chunks.append(source_chunk)
        description = description.strip()
        link = self.entity_chunk_edges.get((eid, source_chunk))
        if link is None:
            self.entity_chunk_edges[(eid, source_chunk)] = EntityChunkEdge(eid, source_chunk, description)
            self._chunk_links.setdefault(eid, set()).add(source_chunk)
        elif description and description not in link.description.split("\n"):
            link.description = f"{link.description}\n{description}" if link.description else description
        return eid

    def add_entity_edge(self, src: str, dst: str, relation: str = "", description: str = "",
                        weight: float = 1.0) -> EdgeKey:
        """Add or merge an entity-entity edge. Endpoints may be names or ids."""
        a, b = normalize_name(src), normalize_name(dst)
        for nid in (a, b):
            if nid not in self.entities:
                raise IntegrityError(f"edge endpoint {nid!r} is not an entity")
        if a == b:
            raise IntegrityError(f"self-loop on {a!r}")
        if weight <= 0:
            raise ValueError("edge weight must be positive")
        key = edge_key(a, b)
        edge = self.entity_edges.get(key)
        description = description.strip()
        if edge is None:
            self.entity_edges[key] = EntityEdge(a, b, relation.strip(), description, float(weight))
            self._adj[a].add(b)
            self._adj[b].add(a)
        else:
            edge.weight += weight
            if not edge.relation:
                edge.relation = relation.strip()
            if description and description not in edge.description.split("\n"):
                edge.description = f"{edge.description}\n{description}" if edge.description else description
        return key

    # -- lookups ----------------------------------------------------------

    def neighbors(self, node: NodeId) -> set[NodeId]:
        return self._adj.get(node, set())

    def chunks_of(self, entity: NodeId) -> set[NodeId]:
        return self._chunk_links.get(entity, set())

    def get_edge(self, edge: EdgeLike) -> EntityEdge:
        key = _key_of(edge)
        try:
            return self.entity_edges[key]
        except KeyError:
            raise NotFoundError(f"edge {key} not in graph") from None

    def _require_entity(self, node: NodeId) -> None:
        if node not in self.entities:
            raise NotFoundError(f"entity {node!r} not in graph")

    def counts(self) -> dict[str, int]:
        return {
            "entities": len(self.entities),
            "chunks": len(self.chunks),
            "entity_edges": len(self.entity_edges),
            "entity_chunk_edges": len(self.entity_chunk_edges),
        }

    def iter_edges_sorted(self) -> Iterator[EntityEdge]:
        for key in sorted(self.entity_edges):
            yield self.entity_edges[key]


def upsert_entity(graph: HeteroGraph, name: str, entity_type: str, source_chunk: NodeId,
                  description: str = "") -> NodeId:
    return graph.upsert_entity(name, entity_type, source_chunk, description)


def check_integrity(graph: HeteroGraph, require_descriptions: bool = False) -> None:
    """Raise IntegrityError listing every violated invariant."""
    problems: list[str] = []
    for eid, node in graph.entities.items():
        if not eid or eid != normalize_name(node.name):
            problems.append(f"entity {eid!r}: name {node.name!r} does not normalize to id")
        if not node.entity_type:
            problems.append(f"entity {eid!r}: empty entity_type")
        if not node.source_chunks:
            problems.append(f"entity {eid!r}: no source chunks")
        for ch in node.source_chunks:
            if ch not in graph.chunks:
                problems.append(f"entity {eid!r}: unknown source chunk {ch!r}")
            if (eid, ch) not in graph.entity_chunk_edges:
                problems.append(f"entity {eid!r}: no provenance edge to {ch!r}")
    for cid, ch in graph.chunks.items():
        if cid != ch.id or not ch.text:
            problems.append(f"chunk {cid!r}: bad id or empty text")
        if ch.token_count != len(ch.text.split()):
            problems.append(f"chunk {cid!r}: token_count {ch.token_count} != {len(ch.text.split())}")
    for key, edge in graph.entity_edges.items():
        if key != edge.key:
            problems.append(f"edge {key}: key does not match endpoints")
        if edge.src == edge.dst:
            problems.append(f"edge {key}: self-loop")
        for nid in (edge.src, edge.dst):
            if nid not in graph.entities:
                problems.append(f"edge {key}: unknown entity {nid!r}")
        if not edge.weight > 0:
            problems.append(f"edge {key}: non-positive weight")
    for (ent, ch), link in graph.entity_chunk_edges.items():
        if (link.entity, link.chunk) != (ent, ch):
            problems.append(f"provenance edge {(ent, ch)}: key mismatch")
        if ent not in graph.entities:
            problems.append(f"provenance edge {(ent, ch)}: unknown entity")
        elif ch not in graph.entities[ent].source_chunks:
            problems.append(f"provenance edge {(ent, ch)}: chunk missing from source_chunks")
        if ch not in graph.chunks:
            problems.append(f"provenance edge {(ent, ch)}: unknown chunk")
        if require_descriptions and not link.description:
            problems.append(f"provenance edge {(ent, ch)}: empty description")
    if problems:
        raise IntegrityError("; ".join(problems[:20]) + (f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""))


# -- algorithms -------------------------------------------------------------

def _bfs_depths(graph: HeteroGraph, sources: Iterable[NodeId], limit: int | None = None) -> dict[NodeId, int]:
    depth = {s: 0 for s in sources}
    queue = deque(depth)
    while queue:
        node = queue.popleft()
        d = depth[node]
        if limit is not None and d >= limit:
            continue
        for nb in graph.neighbors(node):
            if nb not in depth:
                depth[nb] = d + 1
                queue.append(nb)
    return depth


def within_hops(graph: HeteroGraph, sources: Iterable[NodeId], k: int) -> set[NodeId]:
    """Entity nodes at most ``k`` hops from any source (sources included)."""
    return set(_bfs_depths(graph, sources, k))


def k_hop_subgraph(graph: HeteroGraph, edge: EdgeLike, k: int) -> set[NodeId]:
    if k < 0:
        raise ValueError("k must be non-negative")
    e = graph.get_edge(edge)
    return within_hops(graph, (e.src, e.dst), k)


def on_shortest_path(graph: HeteroGraph, edge: EdgeLike, s: NodeId, a: NodeId) -> bool:
    graph._require_entity(s)
    graph._require_entity(a)
    e = graph.get_edge(edge)
    from_s = _bfs_depths(graph, [s])
    if a not in from_s:
        return False
    from_a = _bfs_depths(graph, [a])
    total = from_s[a]
    u, v = e.src, e.dst
    if u not in from_s or v not in from_s:
        return False
    return from_s[u] + 1 + from_a[v] == total or from_s[v] + 1 + from_a[u] == total


def enumerate_acyclic_paths(graph: HeteroGraph, start: NodeId, n: int) -> list[list[NodeId]]:
    """Every simple path with 1..n edges from ``start``, in lexicographic order.

    Preorder DFS over sorted neighbours yields lexicographic order directly,
    since a path sorts before all of its extensions.
    """
    graph._require_entity(start)
    if n < 1:
        raise ValueError("n must be positive")
    out: list[list[NodeId]] = []
    path = [start]
    on_path = {start}
    sorted_nbrs: dict[NodeId, list[NodeId]] = {}

    def nbrs(node: NodeId) -> list[NodeId]:
        if node not in sorted_nbrs:
            sorted_nbrs[node] = sorted(graph.neighbors(node))
        return sorted_nbrs[node]

    def dfs(node: NodeId) -> None:
        if len(path) > n:
            return
        for nb in nbrs(node):
            if nb in on_path:
                continue
            path.append(nb)
            on_path.add(nb)
            out.append(list(path))
            dfs(nb)
            on_path.discard(nb)
            path.pop()

    dfs(start)
    return out


def path_edges(path: list[NodeId]) -> list[EdgeKey]:
    return [edge_key(a, b) for a, b in zip(path, path[1:])]


# -- persistence ------------------------------------------------------------

def graph_schema() -> dict:
    text = resources.files("minirag.schema").joinpath("graph.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def graph_to_dict(graph: HeteroGraph) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "entities": [asdict(graph.entities[k]) for k in sorted(graph.entities)],
        "chunks": [asdict(graph.chunks[k]) for k in sorted(graph.chunks)],
        "entity_edges": [asdict(graph.entity_edges[k]) for k in sorted(graph.entity_edges)],
        "entity_chunk_edges": [asdict(graph.entity_chunk_edges[k]) for k in sorted(graph.entity_chunk_edges)],
    }


def graph_from_dict(data: dict, meta: dict | None = None) -> HeteroGraph:
    g = HeteroGraph(meta=dict(meta or {}))
    for item in data["chunks"]:
        g.chunks[item["id"]] = ChunkNode(**item)
    for item in data["entities"]:
        g.entities[item["id"]] = EntityNode(**item)
    for item in data["entity_edges"]:
        e = EntityEdge(**item)
        g.entity_edges[e.key] = e
    for item in data["entity_chunk_edges"]:
        link = EntityChunkEdge(**item)
        g.entity_chunk_edges[(link.entity, link.chunk)] = link
    g._reindex()
    return g


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def save(graph: HeteroGraph, directory: str | os.PathLike) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    _atomic_write(root / GRAPH_FILE, json.dumps(graph_to_dict(graph), ensure_ascii=False, indent=1) + "\n")
    meta = dict(graph.meta)
    meta["schema_version"] = SCHEMA_VERSION
    _atomic_write(root / META_FILE, json.dumps(meta, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path) -> Any:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FormatError("missing file", str(path)) from None
    except UnicodeDecodeError as exc:
        raise FormatError(f"not UTF-8: {exc}", str(path)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, str(path), exc.lineno) from None


def load(directory: str | os.PathLike) -> HeteroGraph:
    root = Path(directory)
    data = _read_json(root / GRAPH_FILE)
    if not isinstance(data, dict):
        raise FormatError("top level must be an object", str(root / GRAPH_FILE))
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise FormatError(f"schema_version {version!r}, expected {SCHEMA_VERSION}", str(root / GRAPH_FILE))
    try:
        jsonschema.validate(data, graph_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path)
        raise FormatError(f"at /{where}: {exc.message}", str(root / GRAPH_FILE)) from None
    meta: dict = {}
    if (root / META_FILE).exists():
        meta = _read_json(root / META_FILE)
        if not isinstance(meta, dict):
            raise FormatError("top level must be an object", str(root / META_FILE))
        if meta.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise FormatError(f"schema_version {meta.get('schema_version')!r}", str(root / META_FILE))
    meta.pop("schema_version", None)
    graph = graph_from_dict(data, meta)
    check_integrity(graph)
    return graph
