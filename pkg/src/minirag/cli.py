"""``minirag`` command line: index / query / eval / inspect.

Exit codes: 0 success, 1 usage or configuration error, 2 data or format
error, 3 model transport error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from minirag.config import JUDGE_MODES, RETRIEVAL_MODES, AppConfig, load_config
from minirag.errors import (FormatError, IntegrityError, NotFoundError, ProtocolError, ReplayMissError,
                            TransportError)
from minirag.evaluation import load_corpus, load_queries, run_eval
from minirag.gateway import make_gateway
from minirag.indexing import load_documents
from minirag.pipeline import Index, QueryEngine

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRANSPORT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which we reserve for data errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="config file (JSON or key = value lines)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key, e.g. --set k_hop=3 --set gateway.chat_model=qwen2.5-3b; "
                        "repeatable; beats env and file")
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective configuration as JSON and exit")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="minirag", description="Heterogeneous-graph RAG for small language models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("index", help="build or resume an index from a corpus")
    _common(p)
    p.add_argument("--corpus", required=True, metavar="PATH",
                   help="directory of .txt files (doc_id = file stem) or a JSON-lines file of {doc_id, text}")
    p.add_argument("--out", required=True, metavar="DIR", help="index directory to create or resume")
    p.add_argument("--chat-format", action="store_true",
                   help="parse .txt files as timestamped chat logs; doc_id = the Time: header")
    p.add_argument("--indexing-mode", choices=("minimal", "descriptive"),
                   help="extraction prompt: minimal names/types/triples, or full prose descriptions")

    p = sub.add_parser("query", help="answer one question against an index")
    _common(p)
    p.add_argument("--index", required=True, metavar="DIR", help="index directory")
    p.add_argument("question", help="the question to answer")
    p.add_argument("--mode", choices=RETRIEVAL_MODES, help="retrieval mode (ablations: no-edge, no-chunk)")
    p.add_argument("--json", action="store_true",
                   help="print plan, grounded sets, key edges, paths, chunks, context, answer and diagnostics")
    p.add_argument("--no-answer", action="store_true", help="stop after retrieval; do not call the answer model")

    p = sub.add_parser("eval", help="run a query set and report accuracy / error rate")
    _common(p)
    p.add_argument("--index", required=True, metavar="DIR", help="index directory")
    p.add_argument("--queries", required=True, metavar="FILE", help="JSON-lines query file")
    p.add_argument("--judge", choices=JUDGE_MODES, help="answer judging mode (default from config: substring)")
    p.add_argument("--report", required=True, metavar="FILE", help="where to write the JSON report")
    p.add_argument("--mode", choices=RETRIEVAL_MODES, help="retrieval mode")
    p.add_argument("--workers", type=int, default=1, help="queries evaluated concurrently")

    p = sub.add_parser("inspect", help="print index statistics")
    _common(p)
    p.add_argument("--index", required=True, metavar="DIR", help="index directory")
    p.add_argument("--json", action="store_true", help="print statistics as JSON")
    return parser


def _config(args: argparse.Namespace) -> AppConfig:
    flags: dict = {}
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        flags[key.strip()] = value.strip()
    if getattr(args, "mode", None):
        flags["retrieval_mode"] = args.mode
    if getattr(args, "judge", None):
        flags["judge_mode"] = args.judge
    if getattr(args, "indexing_mode", None):
        flags["indexing_mode"] = args.indexing_mode
    try:
        return load_config(args.config, flags)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"configuration: {exc}") from None


def cmd_index(args, cfg: AppConfig) -> int:
    if args.chat_format:
        docs = [d.to_document() for d in load_corpus(args.corpus)]
    else:
        docs = load_documents(args.corpus)
    gateway = make_gateway(cfg.gateway, cfg.prompt_dir)
    index, report = Index.build(docs, cfg, gateway, args.out)
    counts = index.graph.counts()
    print(f"indexed {len(report['indexed'])} documents, skipped {len(report['skipped'])}, "
          f"failed {len(report['failures'])}; {counts['chunks']} chunks, {counts['entities']} entities, "
          f"{counts['entity_edges']} entity edges -> {args.out}")
    for fail in report["failures"]:
        print(f"  failed {fail['doc_id']}: {fail['error']}", file=sys.stderr)
    return EXIT_OK


def cmd_query(args, cfg: AppConfig) -> int:
    index = Index.load(args.index)
    engine = QueryEngine(index, make_gateway(cfg.gateway, cfg.prompt_dir), cfg)
    result = engine.retrieve(args.question) if args.no_answer else engine.query(args.question)
    if args.json:
        print(json.dumps(result.to_dict(), indent=2, ensure_ascii=False))
    elif args.no_answer:
        print(result.context.rendered)
    else:
        print(result.answer)
    return EXIT_OK


def cmd_eval(args, cfg: AppConfig) -> int:
    index = Index.load(args.index)
    gateway = make_gateway(cfg.gateway, cfg.prompt_dir)
    engine = QueryEngine(index, gateway, cfg)
    queries = load_queries(args.queries)
    if not queries:
        raise FormatError("no usable queries", args.queries)
    report = run_eval(engine, queries, cfg.judge_mode, gateway, cfg.hedge_phrases, max(1, args.workers))
    Path(args.report).write_text(json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    o = report["overall"]
    print(f"{o['total']} queries: acc {o['acc']}%  err {o['err']}%  abstain {o['abstain_rate']}%  "
          f"unjudged {o['unjudged']} -> {args.report}")
    return EXIT_OK


def cmd_inspect(args, cfg: AppConfig) -> int:
    stats = Index.load(args.index).stats()
    if args.json:
        print(json.dumps(stats, indent=2))
        return EXIT_OK
    print(f"entities            {stats['entities']}")
    print(f"chunks              {stats['chunks']}")
    print(f"entity edges        {stats['entity_edges']}")
    print(f"entity-chunk edges  {stats['entity_chunk_edges']}")
    for name, n in stats["vector_sizes"].items():
        print(f"vectors[{name}]".ljust(20) + str(n))
    print(f"bytes on disk       {stats['bytes_on_disk']}")
    print("degree histogram    " + (", ".join(f"{d}:{n}" for d, n in stats["degree_histogram"].items()) or "-"))
    return EXIT_OK


COMMANDS = {"index": cmd_index, "query": cmd_query, "eval": cmd_eval, "inspect": cmd_inspect}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.dump_config:
            print(cfg.dumps())
            return EXIT_OK
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"minirag: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, IntegrityError, NotFoundError, ReplayMissError, FileNotFoundError,
            NotADirectoryError, UnicodeDecodeError) as exc:
        print(f"minirag: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TransportError, ProtocolError) as exc:
        print(f"minirag: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
