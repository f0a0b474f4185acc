"""``lectern`` command line: clean, query, analyze, report, vocab.

Exit statuses: 0 success, 1 partial/processing failure, 2 usage or input
error, 3 required service (the LLM server) unavailable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence, TextIO

from . import __version__
from .analysis import KINDS, RunReport, analyze_corpus
from .bookindex import (
    IndexParseError,
    NavTreeError,
    count_entries,
    parse_index,
    parse_nav_tree,
    parse_page_window,
    vocabulary_prompt,
)
from .llm import GatewayConfig, LlmGateway
from .query import QueryEngine
from .report import compare_corpora, render_reports
from .retrieval import DEFAULT_K, DEFAULT_THRESHOLD, explain
from .terms import PhraseLexicon, read_word_list
from .transcript import (
    TranscriptError,
    clean_transcript,
    corpus_stats,
    guess_format,
    load_cleaned,
    parse_transcript,
    write_cleaned,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("lectern")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2
EXIT_UNAVAILABLE = 3

DEFAULT_CONFIG = "lectern.toml"
DEFAULT_TERMS = ("entropy", "enthalpy", "adiabatic", "reversible", "thermodynamic(s)")


@dataclass
class AppConfig:
    index_path: Path = Path("bindex_tab.json")
    nav_tree_path: Path = Path("ftoc_nav_tree.json")
    transcript_dir: Path = Path("transcripts")
    analysis_dir: Path = Path("analysis")
    lexicon_path: Path | None = None
    stopword_path: Path | None = None
    query_log: Path = Path("queries.log.jsonl")
    threshold: float = DEFAULT_THRESHOLD
    context_k: int = DEFAULT_K
    gateway: GatewayConfig = field(default_factory=GatewayConfig)

    def validate(self) -> None:
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if self.context_k < 1:
            raise ValueError("context_k must be >= 1")


_PATH_KEYS = {"index_path", "nav_tree_path", "transcript_dir", "analysis_dir", "lexicon_path",
              "stopword_path", "query_log"}
_LLM_KEYS = {"base_url": "base_url", "model": "model_name", "model_name": "model_name",
             "context_tokens": "context_tokens", "temperature": "temperature",
             "request_timeout": "request_timeout", "retry_count": "retry_count", "lanes": "lanes"}


def load_config(path: Path | None) -> AppConfig:
    """Defaults, then the TOML file, then ``LECTERN_LLM_*`` environment variables."""
    cfg = AppConfig()
    if path is None and Path(DEFAULT_CONFIG).is_file():
        path = Path(DEFAULT_CONFIG)
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        base = path.parent
        known = {f.name for f in fields(AppConfig)} - {"gateway"}
        updates: dict[str, Any] = {}
        for key, value in data.items():
            if key == "llm":
                continue
            if key not in known:
                raise ValueError(f"{path}: unknown config key {key!r}")
            updates[key] = base / value if key in _PATH_KEYS else value
        llm = {}
        for key, value in data.get("llm", {}).items():
            if key not in _LLM_KEYS:
                raise ValueError(f"{path}: unknown [llm] key {key!r}")
            llm[_LLM_KEYS[key]] = value
        cfg = replace(cfg, **updates, gateway=replace(cfg.gateway, **llm))
    cfg.gateway = GatewayConfig.from_env(cfg.gateway)
    return cfg


def _err(msg: str) -> None:
    print(f"lectern: {msg}", file=sys.stderr)


def _transcript_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in (".json", ".txt"))


# -- clean ---------------------------------------------------------------------


def cmd_clean(args: argparse.Namespace, cfg: AppConfig) -> int:
    src = Path(args.inp) if args.inp else cfg.transcript_dir
    if not src.is_dir():
        _err(f"input directory {src} does not exist")
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    files = sorted(src.glob("*.json"))
    total_loops = 0
    for path in files:
        try:
            t = parse_transcript(path)
        except (TranscriptError, OSError) as exc:
            _err(str(exc))
            status = EXIT_PARTIAL
            continue
        cleaned, report = clean_transcript(t)
        write_cleaned(cleaned, report, out / path.name)
        total_loops += len(report.loops)
        print(
            f"{t.lecture_id}: segments {report.raw_segment_count} -> {report.clean_segment_count}, "
            f"loops: {len(report.loops)}, removed {report.removed_segment_count} "
            f"({report.removed_duration:.1f} s)"
        )
        for lp in report.loops:
            print(f"    {lp.text!r} x{lp.count} at {lp.first_start:.1f}-{lp.last_end:.1f} s")
    print(f"{len(files)} file(s), loops: {total_loops}")
    return status


# -- query ------------------------------------------------------------------------


def _append_query_log(path: Path, query: str, result: Any) -> None:
    entry = {
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "query": query,
        "top_topics": [e.rendered_path for e in result.context.entries],
        "mode": result.answer.mode,
    }
    try:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    except OSError as exc:
        _err(f"warning: could not write query log {path}: {exc}")


def _answer(engine: QueryEngine, query: str, args: argparse.Namespace, log_path: Path | None,
            out: TextIO) -> None:
    result = engine.ask(query)
    for w in result.warnings:
        _err(f"warning: {w}")
    if args.explain:
        print(explain(result.merged), file=out)
    print(result.answer.text, file=out)
    if log_path is not None:
        _append_query_log(log_path, query, result)


def cmd_query(args: argparse.Namespace, cfg: AppConfig) -> int:
    try:
        index = parse_index(Path(args.index) if args.index else cfg.index_path)
        nav = parse_nav_tree(Path(args.nav) if args.nav else cfg.nav_tree_path)
        lexicon = PhraseLexicon.load(cfg.lexicon_path, cfg.stopword_path)
    except (IndexParseError, NavTreeError, OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    gateway = None if args.no_llm else LlmGateway(cfg.gateway)
    engine = QueryEngine(
        index, nav, lexicon, gateway,
        threshold=cfg.threshold if args.threshold is None else args.threshold,
        k=cfg.context_k if args.k is None else args.k,
        llm_timeout=cfg.gateway.request_timeout,
    )
    log_path = None if args.no_log else (Path(args.log) if args.log else cfg.query_log)
    try:
        if args.ask is not None:
            if args.ask.strip():
                _answer(engine, args.ask, args, log_path, sys.stdout)
            return EXIT_OK
        interactive = sys.stdin.isatty()
        while True:
            if interactive:
                print("lectern> ", end="", flush=True)
            line = sys.stdin.readline()
            if not line:
                break
            query = line.strip()
            if not query:
                continue
            if query in {"quit", "exit"}:
                break
            _answer(engine, query, args, log_path, sys.stdout)
            sys.stdout.flush()
        return EXIT_OK
    finally:
        if gateway is not None:
            gateway.close()


# -- analyze -------------------------------------------------------------------------


def cmd_analyze(args: argparse.Namespace, cfg: AppConfig) -> int:
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        _err(f"unknown analysis kind(s): {', '.join(bad) or '(none given)'}; choose from {', '.join(KINDS)}")
        return EXIT_USAGE
    src = Path(args.inp) if args.inp else cfg.transcript_dir
    if not src.is_dir():
        _err(f"input directory {src} does not exist")
        return EXIT_USAGE
    gateway = LlmGateway(cfg.gateway)
    try:
        if not gateway.available():
            _err(f"LLM server at {cfg.gateway.base_url} is not reachable; nothing was analysed")
            return EXIT_UNAVAILABLE
        transcripts = []
        parse_failed = False
        for path in _transcript_files(src):
            try:
                transcripts.append(parse_transcript(path, guess_format(path)))
            except (TranscriptError, OSError) as exc:
                _err(str(exc))
                parse_failed = True
        out = Path(args.out) if args.out else cfg.analysis_dir
        report = analyze_corpus(transcripts, kinds, gateway, out)
    finally:
        gateway.close()
    for kind in kinds:
        print(f"{kind}: {report.successes(kind)}/{len(transcripts)} lecture(s) ok")
    for item in report.failures():
        print(f"FAILED {item.lecture_id} {item.kind}: {item.error}")
    if report.bimodal_suspicion:
        print("warning: most lectures produced the same number of questions")
    if not transcripts or any(report.successes(k) == 0 for k in kinds):
        return EXIT_PARTIAL
    return EXIT_PARTIAL if parse_failed else EXIT_OK


# -- report -----------------------------------------------------------------------------


def _load_corpus(directory: Path) -> list:
    return [parse_transcript(p, guess_format(p)) for p in _transcript_files(directory)]


def cmd_report(args: argparse.Namespace, cfg: AppConfig, parser: argparse.ArgumentParser) -> int:
    if not (args.stats or args.compare or args.analysis):
        parser.print_usage(sys.stderr)
        _err("report needs at least one of --stats, --compare, --analysis")
        return EXIT_USAGE
    try:
        stats = None
        if args.stats:
            transcripts, reports = [], []
            for path in _transcript_files(Path(args.stats)):
                t, rep = load_cleaned(path)
                if rep is None:
                    _, rep = clean_transcript(t)
                transcripts.append(t)
                reports.append(rep)
            stats = corpus_stats(transcripts, reports)
        cmp = None
        if args.compare:
            base_dir = Path(args.corpus or args.stats or cfg.transcript_dir)
            other_dir = Path(args.compare)
            terms = read_word_list(args.terms, "") if args.terms else list(DEFAULT_TERMS)
            cmp = compare_corpora(
                _load_corpus(other_dir), _load_corpus(base_dir), terms,
                label_a=other_dir.name or "A", label_b=base_dir.name or "B",
            )
        analyses = None
        if args.analysis:
            path = Path(args.analysis)
            if path.is_dir():
                path = path / "run_report.json"
            analyses = RunReport.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, TranscriptError, ValueError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    doc = render_reports(stats, cmp, analyses)
    sys.stdout.write(doc.text)
    if args.json:
        Path(args.json).write_text(doc.json(), encoding="utf-8")
    return EXIT_OK


# -- vocab --------------------------------------------------------------------------------


def cmd_vocab(args: argparse.Namespace, cfg: AppConfig) -> int:
    try:
        window = parse_page_window(args.pages) if args.pages else None
    except ValueError as exc:
        _err(f"bad --pages: {exc}")
        return EXIT_USAGE
    if args.budget < 1:
        _err("--budget must be at least 1")
        return EXIT_USAGE
    try:
        index = parse_index(Path(args.index) if args.index else cfg.index_path)
    except (IndexParseError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    log.info("index has %d entries", count_entries(index))
    prompt = vocabulary_prompt(index, window, args.budget)
    if args.out:
        Path(args.out).write_text(prompt + "\n", encoding="utf-8")
    print(prompt)
    return EXIT_OK


# -- entry point --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lectern", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", type=Path, help=f"TOML config file (default: ./{DEFAULT_CONFIG} if present)")
    p.add_argument("--llm-url", help="inference server base URL")
    p.add_argument("--model", help="model name")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("clean", help="remove repetition loops from segmented transcripts")
    c.add_argument("--in", dest="inp", help="directory of segmented transcript JSON files")
    c.add_argument("--out", required=True, help="directory for cleaned transcripts")

    q = sub.add_parser("query", help="ask questions against the textbook index")
    q.add_argument("--ask", help="answer one question and exit (otherwise read questions from stdin)")
    q.add_argument("--no-llm", action="store_true", help="pattern extraction and fallback answers only")
    q.add_argument("--explain", action="store_true", help="print the merged, scored matches as JSON")
    q.add_argument("--index", help="index JSON (bindex_tab.json)")
    q.add_argument("--nav", help="table-of-contents JSON (ftoc_nav_tree.json)")
    q.add_argument("--threshold", type=float)
    q.add_argument("--k", type=int, help="number of context entries")
    q.add_argument("--log", help="query log path (JSON lines)")
    q.add_argument("--no-log", action="store_true", help="do not log queries")

    a = sub.add_parser("analyze", help="run lecture analyses through the LLM")
    a.add_argument("--in", dest="inp", help="directory of cleaned transcripts")
    a.add_argument("--out", help="output directory for analysis files")
    a.add_argument("--kinds", default=",".join(KINDS), help="comma-separated subset of " + ",".join(KINDS))

    r = sub.add_parser("report", help="transcript quality, ASR comparison and analysis digest")
    r.add_argument("--stats", help="directory of transcripts to summarise")
    r.add_argument("--compare", help="directory of another ASR system's transcripts")
    r.add_argument("--corpus", help="transcripts to compare against (default: --stats dir)")
    r.add_argument("--terms", help="term list file, one per line; a trailing (s) allows plurals")
    r.add_argument("--analysis", help="analysis directory or run_report.json")
    r.add_argument("--json", help="also write the machine-readable report here")

    v = sub.add_parser("vocab", help="build an ASR vocabulary prompt from the index")
    v.add_argument("--index", help="index JSON (bindex_tab.json)")
    v.add_argument("--pages", help="page window A:B")
    v.add_argument("--budget", type=int, default=224, help="token budget (4 characters per token)")
    v.add_argument("--out", help="also write the prompt to this file")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        if args.llm_url:
            cfg.gateway = replace(cfg.gateway, base_url=args.llm_url)
        if args.model:
            cfg.gateway = replace(cfg.gateway, model_name=args.model)
        cfg.validate()
    except (OSError, ValueError, tomllib.TOMLDecodeError) as exc:
        _err(f"configuration error: {exc}")
        return EXIT_USAGE

    if args.command == "clean":
        return cmd_clean(args, cfg)
    if args.command == "query":
        return cmd_query(args, cfg)
    if args.command == "analyze":
        return cmd_analyze(args, cfg)
    if args.command == "report":
        return cmd_report(args, cfg, parser)
    return cmd_vocab(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
