import json

import pytest

from minirag import cli
from minirag.config import load_config
from minirag.data import toy
from minirag.evaluation import load_corpus, load_queries, run_eval
from minirag.gateway import make_gateway
from minirag.graph import check_integrity
from minirag.pipeline import Index, QueryEngine

import build_toy_transcript  # noqa: E402  (scripts/ is on sys.path via conftest)


@pytest.fixture(scope="module")
def toy_index(tmp_path_factory):
    cfg = load_config(toy.CONFIG_FILE, environ={})
    docs = [d.to_document() for d in load_corpus(toy.CORPUS_DIR)]
    out = tmp_path_factory.mktemp("toy")
    index, report = Index.build(docs, cfg, make_gateway(cfg.gateway), out)
    assert report["failures"] == []
    return Index.load(out), cfg


def test_toy_counts_match_checker(toy_index):
    index, _ = toy_index
    check_integrity(index.graph)
    stats = index.stats()
    g = index.graph
    assert stats["entities"] == len(g.entities) and stats["chunks"] == len(g.chunks) == 12
    assert stats["entity_edges"] == len(g.entity_edges)
    assert sum(stats["degree_histogram"].values()) == len(g.entities)
    assert stats["vector_sizes"] == {"chunks": 12, "entities": len(g.entities)}
    assert stats["meta"]["embed_model"] == "hash-64-seed0"


def test_toy_eval_all_correct(toy_index):
    index, cfg = toy_index
    engine = QueryEngine(index, make_gateway(cfg.gateway), cfg)
    report = run_eval(engine, load_queries(toy.QUERIES_FILE), workers=4)
    assert report["overall"]["acc"] == 100.0
    for r in report["records"]:
        assert set(r["support_docs"]) & set(r["retrieved_docs"])
    assert report["index_bytes"] > 0


def test_empty_index_inspect(tmp_path, capsys):
    cfg = load_config(toy.CONFIG_FILE, environ={})
    Index.build([], cfg, make_gateway(cfg.gateway), tmp_path)
    stats = Index.load(tmp_path).stats()
    assert (stats["entities"], stats["chunks"], stats["entity_edges"], stats["entity_chunk_edges"]) == (0, 0, 0, 0)
    assert cli.main(["inspect", "--index", str(tmp_path), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["entities"] == 0


def test_cli_round_trip(tmp_path, capsys):
    conf = str(toy.CONFIG_FILE)
    out = str(tmp_path / "idx")
    assert cli.main(["index", "--config", conf, "--corpus", str(toy.CORPUS_DIR), "--chat-format", "--out", out]) == 0
    q = "Where is Li Hua's new apartment?"
    capsys.readouterr()
    assert cli.main(["query", "--config", conf, "--index", out, q]) == 0
    assert "Maple Street" in capsys.readouterr().out
    assert cli.main(["query", "--config", conf, "--index", out, q, "--json", "--mode", "no-edge"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["key_edges"] == [] and payload["diagnostics"]["mode"] == "no-edge"
    report = tmp_path / "r.json"
    assert cli.main(["eval", "--config", conf, "--index", out, "--queries", str(toy.QUERIES_FILE),
                     "--report", str(report)]) == 0
    assert json.loads(report.read_text())["overall"]["acc"] == 100.0


def test_unscripted_question_is_replay_miss(tmp_path, toy_index, capsys):
    index, _ = toy_index
    code = cli.main(["query", "--config", str(toy.CONFIG_FILE), "--index", str(index.path), "Who ate the cake?"])
    assert code == 2
    assert "fingerprint" in capsys.readouterr().err


def test_committed_transcript_is_current():
    """Prompts, chunking or the script changed without regenerating transcript.json?"""
    fresh = build_toy_transcript.record()
    committed = json.loads(toy.TRANSCRIPT_FILE.read_text(encoding="utf-8"))
    assert {e["fingerprint"]: e["response"] for e in committed["entries"]} == \
        {fp: e.response for fp, e in fresh.entries.items()}
