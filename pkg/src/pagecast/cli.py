"""The ``pagecast`` command.

Exit codes: 0 success, 1 partial failures (some books failed), 2 usage or
configuration errors.  Progress goes to stderr, machine-readable results
to files or stdout.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from . import cluster as cluster_mod
from . import features as features_mod
from . import ingest
from . import normalize as normalize_mod
from . import pipeline as pipeline_mod
from . import script as script_mod
from .dom import parse_html, serialize_html
from .errors import PagecastError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


def _load_config_tree(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return {}, Path(".")
    cfg_path = Path(path)
    with open(cfg_path, "rb") as fh:
        return tomllib.load(fh), cfg_path.parent


def _build_config(args: argparse.Namespace) -> pipeline_mod.PipelineConfig:
    tree, base = _load_config_tree(getattr(args, "config", None))
    config = pipeline_mod.config_from_mapping(tree, base_dir=base)
    overrides = {
        "corpus": ("corpus_root", Path),
        "out": ("output_root", Path),
        "k": ("k", int),
        "seed": ("seed", int),
        "min_df": ("min_df", int),
        "max_terms": ("max_terms", int),
        "workers": ("worker_count", int),
    }
    for flag, (attr, cast) in overrides.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(config, attr, cast(value))
    stages = getattr(args, "stages", None)
    if stages:
        config.stages = tuple(s.strip() for s in stages.split(","))
    return config


def _resolve_ruleset(spec: str) -> normalize_mod.RuleSet:
    if spec == "std-v1":
        return normalize_mod.default_ruleset()
    return normalize_mod.load_ruleset(spec)


# --- subcommands -------------------------------------------------------------

def _cmd_scan(args: argparse.Namespace) -> int:
    refs = ingest.scan_corpus(args.corpus)
    for ref in refs:
        print(f"{ref.book_id}\t{ref.path}\t{ref.size_bytes}")
    _progress(f"scanned {len(refs)} books")
    return 0


def _featurize_corpus(corpus: str, min_df: int, max_terms: int):
    refs = ingest.scan_corpus(corpus)
    per_book = []
    failures = []
    for ref in refs:
        try:
            doc = ingest.load_ebook(ref)
            tree = parse_html(doc.raw_html)
            per_book.append((ref.book_id, *features_mod.featurize_book(tree)))
        except PagecastError as exc:
            failures.append((ref.book_id, exc))
    if not per_book:
        raise PagecastError("no featurizable books found")
    vocab = features_mod.build_vocabulary([t for _, t, _ in per_book], min_df, max_terms)
    stats = features_mod.corpus_stats([h for _, _, h in per_book])
    vectors = [
        features_mod.assemble_features(
            book_id, features_mod.tfidf(tokens, vocab), handcrafted, stats, len(vocab.terms)
        )
        for book_id, tokens, handcrafted in per_book
    ]
    return vectors, failures


def _cmd_features(args: argparse.Namespace) -> int:
    config = _build_config(args)
    vectors, failures = _featurize_corpus(
        str(config.corpus_root if args.corpus is None else args.corpus),
        config.min_df, config.max_terms,
    )
    features_mod.write_matrix(vectors, args.out)
    _progress(f"wrote {len(vectors)} feature rows to {args.out}")
    for book_id, exc in failures:
        _progress(f"failed: {book_id}: {exc}")
    return 1 if failures else 0


def _cmd_cluster(args: argparse.Namespace) -> int:
    config = _build_config(args)
    book_ids, vectors = features_mod.read_matrix(args.features)
    model = cluster_mod.kmeans_fit(vectors, k=config.k, seed=config.seed)
    cluster_mod.save_model(model, args.out)
    for book_id, vector in zip(book_ids, vectors):
        cid, dist = cluster_mod.assign(model, vector)
        print(f"{book_id}\t{cid}\t{dist:.6f}")
    _progress(
        f"k={model.k} inertia={model.inertia:.4f} iterations={model.iterations_run}"
    )
    return 0


def _cmd_plot(args: argparse.Namespace) -> int:
    book_ids, vectors = features_mod.read_matrix(args.features)
    model = cluster_mod.load_model(args.model)
    labels = [cluster_mod.assign(model, v)[0] for v in vectors]
    points = cluster_mod.project_2d(vectors)
    cluster_mod.emit_scatter_plot(points, labels, args.out)
    _progress(f"wrote {args.out} ({len(points)} points)")
    if args.png:
        cluster_mod.emit_scatter_png(points, labels, args.png)
        _progress(f"wrote {args.png}")
    return 0


def _iter_selected_books(corpus: str, only: str | None):
    for ref in ingest.scan_corpus(corpus):
        if only is not None and ref.book_id != only:
            continue
        yield ref


def _cmd_normalize(args: argparse.Namespace) -> int:
    ruleset = _resolve_ruleset(args.ruleset)
    out_root = Path(args.out)
    failures = 0
    for ref in _iter_selected_books(args.corpus, args.book):
        try:
            doc = ingest.load_ebook(ref)
            tree = parse_html(doc.raw_html)
            normalized = normalize_mod.apply_rules(tree, ruleset, ref.book_id)
            book_dir = out_root / ref.book_id
            book_dir.mkdir(parents=True, exist_ok=True)
            normalize_mod.write_report(normalized.report, book_dir / "report.v1")
            (book_dir / "normalized.html").write_text(
                serialize_html(normalized.tree), encoding="utf-8"
            )
            _progress(
                f"{ref.book_id}: kept {normalized.report.characters_kept} chars, "
                f"removed {normalized.report.characters_removed}"
            )
        except PagecastError as exc:
            _progress(f"failed: {ref.book_id}: {exc}")
            failures += 1
    return 1 if failures else 0


def _cmd_script(args: argparse.Namespace) -> int:
    config = _build_config(args)
    ruleset = _resolve_ruleset(args.ruleset)
    out_root = Path(args.out)
    failures = 0
    for ref in _iter_selected_books(args.corpus, args.book):
        try:
            doc = ingest.load_ebook(ref)
            tree = parse_html(doc.raw_html)
            normalized = normalize_mod.apply_rules(tree, ruleset, ref.book_id)
            script = script_mod.build_script(
                normalized, metadata=doc.metadata,
                voice_pool=config.voice_pool, narrator_voice=config.narrator_voice,
            )
            book_dir = out_root / ref.book_id
            book_dir.mkdir(parents=True, exist_ok=True)
            script_mod.save_script(script, book_dir / "script.v1")
            for chapter, doc_xml in zip(
                script.chapters,
                script_mod.export_ssml(script, rate=config.rate, pitch=config.pitch,
                                       emotion_style_map=config.emotion_styles),
            ):
                (book_dir / f"ch{chapter.index:03d}.ssml").write_text(doc_xml, "utf-8")
            _progress(f"{ref.book_id}: {len(script.chapters)} chapters")
        except PagecastError as exc:
            _progress(f"failed: {ref.book_id}: {exc}")
            failures += 1
    return 1 if failures else 0


def _cmd_build(args: argparse.Namespace) -> int:
    config = _build_config(args)
    if args.resume:
        manifest = pipeline_mod.resume(config)
    else:
        manifest = pipeline_mod.run_pipeline(config)
    failed = [e for e in manifest.entries.values() if e.status == "failed"]
    done = sum(1 for e in manifest.entries.values() if e.status == "done")
    excluded = sum(1 for e in manifest.entries.values() if e.status == "excluded")
    _progress(f"done={done} excluded={excluded} failed={len(failed)}")
    for entry in failed:
        _progress(f"failed: {entry.book_id}: {entry.error}")
    return 1 if failed else 0


def _cmd_stats(args: argparse.Namespace) -> int:
    manifest = pipeline_mod.load_manifest(args.manifest)
    stats = pipeline_mod.collection_stats(manifest)
    print(f"books_done={int(stats['books_done'])}")
    print(f"total_hours={stats['total_hours']!r}")
    if args.figure:
        _emit_duration_figure(manifest, args.figure)
        _progress(f"wrote {args.figure}")
    return 0


def _emit_duration_figure(manifest: pipeline_mod.Manifest, out_path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    done = [
        (book_id, entry.audio_ms or 0)
        for book_id, entry in sorted(manifest.entries.items())
        if entry.status == "done"
    ]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    names = [d[0] for d in done]
    hours = [d[1] / 3_600_000.0 for d in done]
    ax.bar(range(len(done)), hours, color="#1f77b4")
    ax.set_xticks(range(len(done)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("audio hours")
    ax.set_title("Audio per book")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from . import service as service_mod

    tree, base = _load_config_tree(getattr(args, "config", None))
    config = _build_config(args)
    svc = service_mod.ServiceConfig.from_mapping(tree, config, base_dir=base)
    if args.host:
        svc.host = args.host
    if args.port:
        svc.port = args.port
    app = service_mod.create_app(svc)
    _progress(f"serving on {svc.host}:{svc.port}")
    uvicorn.run(app, host=svc.host, port=svc.port, log_level="warning")
    return 0


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pagecast",
        description="Turn a directory of HTML e-books into narrated audiobooks.",
    )
    parser.add_argument("--version", action="version", version=f"pagecast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="TOML config file; flags override its values")

    p = sub.add_parser("scan", help="list e-books under a corpus directory")
    p.add_argument("--corpus", required=True)
    p.set_defaults(fn=_cmd_scan)

    p = sub.add_parser("features", help="write the per-book feature matrix")
    add_config(p)
    p.add_argument("--corpus")
    p.add_argument("--out", default="features.tsv")
    p.add_argument("--min-df", dest="min_df", type=int)
    p.add_argument("--max-terms", dest="max_terms", type=int)
    p.set_defaults(fn=_cmd_features)

    p = sub.add_parser("cluster", help="fit the k-means model over a feature matrix")
    add_config(p)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default="model.kmeans")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_cluster)

    p = sub.add_parser("plot", help="render the 2-D cluster scatter plot")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="SVG output path")
    p.add_argument("--png", help="also render a matplotlib PNG here")
    p.set_defaults(fn=_cmd_plot)

    p = sub.add_parser("normalize", help="apply a rule set and dump reports")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ruleset", default="std-v1", help="bundled id or a rules file path")
    p.add_argument("--book", help="only this book id")
    p.set_defaults(fn=_cmd_normalize)

    p = sub.add_parser("script", help="build narration scripts and SSML")
    add_config(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ruleset", default="std-v1")
    p.add_argument("--book")
    p.set_defaults(fn=_cmd_script)

    p = sub.add_parser("build", help="run the full pipeline")
    add_config(p)
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-df", dest="min_df", type=int)
    p.add_argument("--max-terms", dest="max_terms", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--stages", help="comma-separated stage prefix")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(fn=_cmd_build)

    p = sub.add_parser("stats", help="collection statistics from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--figure", help="write a per-book duration chart (PNG)")
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("serve", help="run the audiobook job service")
    add_config(p)
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PagecastError as exc:
        _progress(f"error: {type(exc).__name__}: {exc}")
        return 2
    except (NotADirectoryError, FileNotFoundError, PermissionError) as exc:
        _progress(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
