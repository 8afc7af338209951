"""Regenerate the toy replay transcript from the scripted model.

Indexes the toy corpus in both extraction modes and runs every toy query in
every retrieval mode through a RecordingChat, then writes transcript.json.

    python scripts/build_toy_transcript.py [--out PATH]
"""

import argparse
import tempfile

from minirag.config import load_config
from minirag.data import toy
from minirag.evaluation import load_corpus, load_queries
from minirag.gateway import Gateway, HashEmbedder, PromptLibrary, RecordingChat
from minirag.pipeline import Index, QueryEngine


def record(retrieval_modes=("full", "no-edge", "no-chunk")) -> RecordingChat:
    chat = RecordingChat(toy.responder)
    docs = [d.to_document() for d in load_corpus(toy.CORPUS_DIR)]
    queries = load_queries(toy.QUERIES_FILE)
    for indexing_mode in ("minimal", "descriptive"):
        cfg = load_config(toy.CONFIG_FILE, {"indexing_mode": indexing_mode})
        gw = Gateway(chat, HashEmbedder(cfg.gateway.hash_dim, cfg.gateway.hash_seed), PromptLibrary(cfg.prompt_dir or None))
        with tempfile.TemporaryDirectory() as tmp:
            index, _ = Index.build(docs, cfg, gw, tmp)
            engine = QueryEngine(index, gw, cfg)
            for mode in retrieval_modes:
                for q in queries:
                    engine.query(q.question, mode)
    return chat


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(toy.TRANSCRIPT_FILE))
    args = ap.parse_args()
    chat = record()
    chat.dump(args.out)
    print(f"{len(chat.entries)} exchanges -> {args.out}")


if __name__ == "__main__":
    main()
