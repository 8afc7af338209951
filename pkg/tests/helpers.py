"""Shared builders for the test suite."""

import random

from minirag.gateway import Gateway, HashEmbedder, PromptLibrary
from minirag.graph import ChunkNode, HeteroGraph

TYPES = ["PERSON", "LOCATION", "EVENT", "OBJECT"]


def path_graph(names="abcde"):
    """Entities a-b-c-d-e in a line, each backed by its own chunk."""
    g = HeteroGraph()
    for n in names:
        g.add_chunk(ChunkNode(f"chunk-d-{n}", "d", ord(n), f"text about {n}", 3))
        g.upsert_entity(n, "PERSON", f"chunk-d-{n}", f"note on {n}")
    for a, b in zip(names, names[1:]):
        g.add_entity_edge(a, b, "NEXT", f"{a} next to {b}")
    return g


def random_graph(rng: random.Random, max_entities=12, max_edges=20, max_chunks=6) -> HeteroGraph:
    g = HeteroGraph()
    n_chunks = rng.randint(1, max_chunks)
    chunk_ids = []
    for i in range(n_chunks):
        words = " ".join(rng.choice(["alpha", "beta", "gamma", "delta", "omega", "pizza", "park"])
                         for _ in range(rng.randint(2, 8)))
        c = ChunkNode(f"chunk-doc{i % 3}-{i}", f"doc{i % 3}", i, words, len(words.split()))
        g.add_chunk(c)
        chunk_ids.append(c.id)
    n_ent = rng.randint(1, max_entities)
    names = [f"e{i:02d}" for i in range(n_ent)]
    for name in names:
        for ch in rng.sample(chunk_ids, rng.randint(1, min(2, len(chunk_ids)))):
            g.upsert_entity(name, rng.choice(TYPES), ch, rng.choice(["", f"{name} seen", f"about {name} here"]))
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    for a, b in rng.sample(pairs, min(len(pairs), rng.randint(0, max_edges))):
        g.add_entity_edge(a, b, rng.choice(["KNOWS", "NEAR", ""]), rng.choice(["", f"{a} with {b}"]))
    return g


class ScriptedChat:
    """Chat backend that answers from a label -> text mapping (or a callable)."""

    def __init__(self, replies=None, default=""):
        self.replies = replies or {}
        self.default = default
        self.calls = []

    def chat(self, messages, label=""):
        self.calls.append((label, messages))
        reply = self.replies.get(label, self.default)
        return reply(messages) if callable(reply) else reply


def scripted_gateway(replies=None, default="", dim=64) -> Gateway:
    return Gateway(ScriptedChat(replies, default), HashEmbedder(dim, 0), PromptLibrary())
