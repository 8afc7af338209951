"""Accuracy and index size on the toy set for each indexing and retrieval mode.

Builds both index variants with the replay backend, evaluates every retrieval
mode and prints a table. Pass --config to point at a live model instead.

    python scripts/toy_ablation.py [--config FILE] [--out DIR]
"""

import argparse
import json
import tempfile
from pathlib import Path

from minirag.config import RETRIEVAL_MODES, load_config
from minirag.data import toy
from minirag.evaluation import load_corpus, load_queries, run_eval
from minirag.gateway import make_gateway
from minirag.pipeline import Index, QueryEngine, directory_bytes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(toy.CONFIG_FILE))
    ap.add_argument("--out", help="keep indexes and reports here (default: a temp dir)")
    args = ap.parse_args()

    docs = [d.to_document() for d in load_corpus(toy.CORPUS_DIR)]
    queries = load_queries(toy.QUERIES_FILE)
    root = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="minirag-ablation-"))
    rows = []
    sizes = {}
    for indexing in ("minimal", "descriptive"):
        cfg = load_config(args.config, {"indexing_mode": indexing})
        gw = make_gateway(cfg.gateway, cfg.prompt_dir)
        index, _ = Index.build(docs, cfg, gw, root / indexing)
        sizes[indexing] = directory_bytes(root / indexing)
        engine = QueryEngine(index, gw, cfg)
        for mode in RETRIEVAL_MODES:
            engine.cfg.retrieval_mode = mode
            report = run_eval(engine, queries)
            (root / f"report-{indexing}-{mode}.json").write_text(json.dumps(report, indent=2))
            o = report["overall"]
            rows.append((indexing, mode, o["acc"], o["err"], o["abstain_rate"]))

    print(f"{'indexing':<12}{'retrieval':<10}{'acc%':>8}{'err%':>8}{'abst%':>8}")
    for r in rows:
        print(f"{r[0]:<12}{r[1]:<10}{r[2]:>8}{r[3]:>8}{r[4]:>8}")
    saving = 100 * (1 - sizes["minimal"] / sizes["descriptive"])
    print(f"\nindex bytes: minimal {sizes['minimal']}, descriptive {sizes['descriptive']} "
          f"({saving:.1f}% smaller)  -> {root}")


if __name__ == "__main__":
    main()
