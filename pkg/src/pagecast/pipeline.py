"""End-to-end batch orchestration with resumable manifests.

Stages run in a fixed order (features, cluster, normalize, script, audio).
Per-book work is fanned out to a thread pool; every corpus-order-sensitive
reduction (vocabulary, corpus stats, the k-means input matrix, manifest
rows) consumes book_id-sorted inputs, so worker count and completion order
never change any output byte.  The manifest is written atomically (temp
file + rename) after every stage; timestamps live in their own section so
manifests from different runs compare equal on content.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import audio as audio_mod
from . import cluster as cluster_mod
from . import dom
from . import features as features_mod
from . import ingest
from . import normalize as normalize_mod
from . import script as script_mod
from . import synth as synth_mod
from .dom import parse_html
from .errors import ConfigInvalid, CorpusEmpty, FingerprintMismatch, KTooLarge

STAGE_ORDER = ("features", "cluster", "normalize", "script", "audio")

MANIFEST_NAME = "manifest.v1"
FEATURES_NAME = "features.tsv"
MODEL_NAME = "model.kmeans"
VOCAB_NAME = "vocab.v1"
STATS_NAME = "stats.v1"


@dataclass
class PipelineConfig:
    corpus_root: Path
    output_root: Path
    k: int = 12
    seed: int = 0
    min_df: int = features_mod.DEFAULT_MIN_DF
    max_terms: int = features_mod.DEFAULT_MAX_TERMS
    keep_list: dict[int, str] = field(default_factory=dict)
    rulesets: dict[str, str] = field(default_factory=dict)  # id -> file path
    narrator_voice: str = "en-narrator-1"
    voice_pool: tuple[str, ...] = ("en-char-1", "en-char-2", "en-char-3", "en-char-4")
    rate: float = 1.0
    pitch: float = 0.0
    backend: str = "deterministic"
    endpoint: str = ""
    auth_token: str = ""
    worker_count: int = 1
    stages: tuple[str, ...] = STAGE_ORDER
    sample_rate_hz: int = audio_mod.DEFAULT_SAMPLE_RATE
    emotion_styles: dict[str, str] = field(
        default_factory=lambda: dict(script_mod.DEFAULT_EMOTION_STYLES)
    )

    def validate(self) -> None:
        if self.worker_count < 1:
            raise ConfigInvalid("worker_count must be >= 1")
        if not self.stages:
            raise ConfigInvalid("stages must not be empty")
        if tuple(self.stages) != STAGE_ORDER[: len(self.stages)]:
            raise ConfigInvalid(
                f"stages must be a prefix of {STAGE_ORDER}, got {self.stages}"
            )
        if self.k < 1:
            raise ConfigInvalid("k must be >= 1")
        if self.min_df < 1:
            raise ConfigInvalid("min_df must be >= 1")
        if self.backend not in ("deterministic", "remote"):
            raise ConfigInvalid(f"unknown backend {self.backend!r}")
        if self.backend == "remote" and not self.endpoint:
            raise ConfigInvalid("remote backend needs an endpoint")
        if not self.voice_pool:
            raise ConfigInvalid("voice_pool must not be empty")

    def fingerprint(self) -> str:
        """Hash of the semantic configuration.

        Paths and worker_count are excluded: moving an output tree or
        changing parallelism does not invalidate previous work.
        """
        parts = [
            f"k={self.k}",
            f"seed={self.seed}",
            f"min_df={self.min_df}",
            f"max_terms={self.max_terms}",
            "keep=" + ",".join(f"{c}:{r}" for c, r in sorted(self.keep_list.items())),
            "rulesets=" + ",".join(f"{k}:{v}" for k, v in sorted(self.rulesets.items())),
            f"narrator={self.narrator_voice}",
            "pool=" + ",".join(self.voice_pool),
            f"rate={self.rate!r}",
            f"pitch={self.pitch!r}",
            f"backend={self.backend}",
            f"endpoint={self.endpoint}",
            "stages=" + ",".join(self.stages),
            f"sample_rate={self.sample_rate_hz}",
            "styles=" + ",".join(f"{k}:{v}" for k, v in sorted(self.emotion_styles.items())),
        ]
        return hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()

    def make_backend(self) -> synth_mod.Backend:
        return synth_mod.make_backend(self.backend, self.endpoint, self.auth_token)

    def ruleset_for(self, ruleset_id: str) -> normalize_mod.RuleSet:
        if ruleset_id in self.rulesets:
            return normalize_mod.load_ruleset(self.rulesets[ruleset_id])
        if ruleset_id == "std-v1":
            return normalize_mod.default_ruleset()
        raise ConfigInvalid(f"no rule file configured for ruleset {ruleset_id!r}")


def config_from_mapping(data: dict, base_dir: Optional[Path] = None) -> PipelineConfig:
    """Build a PipelineConfig from a parsed config-file tree."""
    base = base_dir or Path(".")

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    corpus = data.get("corpus", {})
    output = data.get("output", {})
    feats = data.get("features", {})
    clus = data.get("cluster", {})
    voices = data.get("voices", {})
    backend = data.get("backend", {})
    run = data.get("run", {})
    keep = {int(k): str(v) for k, v in data.get("keep", {}).items()}
    rulesets = {
        str(k): str(resolve(str(v))) for k, v in data.get("rulesets", {}).items()
    }
    cfg = PipelineConfig(
        corpus_root=resolve(corpus.get("root", "corpus")),
        output_root=resolve(output.get("root", "out")),
        k=int(clus.get("k", 12)),
        seed=int(clus.get("seed", 0)),
        min_df=int(feats.get("min_df", features_mod.DEFAULT_MIN_DF)),
        max_terms=int(feats.get("max_terms", features_mod.DEFAULT_MAX_TERMS)),
        keep_list=keep,
        rulesets=rulesets,
        narrator_voice=str(voices.get("narrator", "en-narrator-1")),
        voice_pool=tuple(voices.get("pool", ("en-char-1", "en-char-2", "en-char-3", "en-char-4"))),
        rate=float(voices.get("rate", 1.0)),
        pitch=float(voices.get("pitch", 0.0)),
        backend=str(backend.get("kind", "deterministic")),
        endpoint=str(backend.get("endpoint", "")),
        auth_token=str(backend.get("auth_token", "")),
        worker_count=int(run.get("workers", 1)),
        stages=tuple(run.get("stages", STAGE_ORDER)),
        sample_rate_hz=int(run.get("sample_rate_hz", audio_mod.DEFAULT_SAMPLE_RATE)),
    )
    if "styles" in data:
        cfg.emotion_styles = {str(k): str(v) for k, v in data["styles"].items()}
    return cfg


# --- manifest ----------------------------------------------------------------

@dataclass
class BookEntry:
    book_id: str
    status: str = "failed"  # done | excluded | failed
    cluster_id: Optional[int] = None
    ruleset_id: Optional[str] = None
    chars_kept: Optional[int] = None
    chars_removed: Optional[int] = None
    nodes_removed: Optional[int] = None
    rule_counts: dict[str, int] = field(default_factory=dict)
    chapter_count: Optional[int] = None
    audio_ms: Optional[int] = None
    outputs: list[str] = field(default_factory=list)
    error: str = ""


@dataclass
class Manifest:
    fingerprint: str
    entries: dict[str, BookEntry] = field(default_factory=dict)
    started: str = ""
    finished: str = ""

    def comparable_text(self) -> str:
        """Serialized form minus the timestamps section."""
        lines = serialize_manifest(self).splitlines()
        out = []
        in_timestamps = False
        for line in lines:
            if line == "[timestamps]":
                in_timestamps = True
                continue
            if line.startswith("["):
                in_timestamps = False
            if not in_timestamps:
                out.append(line)
        return "\n".join(out) + "\n"


def _fmt_opt(value) -> str:
    return "-" if value is None else str(value)


def serialize_manifest(manifest: Manifest) -> str:
    lines = ["manifest v1", f"fingerprint {manifest.fingerprint}"]
    lines.append("[timestamps]")
    lines.append(f"started {manifest.started}")
    lines.append(f"finished {manifest.finished}")
    lines.append("[books]")
    for book_id in sorted(manifest.entries):
        e = manifest.entries[book_id]
        rules = ",".join(f"{k}:{v}" for k, v in e.rule_counts.items())
        fields = [
            book_id,
            f"status={e.status}",
            f"cluster={_fmt_opt(e.cluster_id)}",
            f"ruleset={_fmt_opt(e.ruleset_id)}",
            f"kept={_fmt_opt(e.chars_kept)}",
            f"removed={_fmt_opt(e.chars_removed)}",
            f"nodes={_fmt_opt(e.nodes_removed)}",
            f"rules={rules}",
            f"chapters={_fmt_opt(e.chapter_count)}",
            f"audio_ms={_fmt_opt(e.audio_ms)}",
            "outputs=" + ",".join(e.outputs),
            "error=" + e.error.replace("\t", " ").replace("\n", " "),
        ]
        lines.append("\t".join(fields))
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> Manifest:
    lines = text.splitlines()
    if not lines or lines[0] != "manifest v1":
        raise ValueError("not a manifest v1 file")
    manifest = Manifest(fingerprint="")
    section = ""
    for line in lines[1:]:
        if line.startswith("fingerprint "):
            manifest.fingerprint = line.split(" ", 1)[1]
            continue
        if line in ("[timestamps]", "[books]"):
            section = line
            continue
        if section == "[timestamps]":
            key, _, value = line.partition(" ")
            if key == "started":
                manifest.started = value
            elif key == "finished":
                manifest.finished = value
            continue
        if section == "[books]" and line:
            fields = line.split("\t")
            entry = BookEntry(book_id=fields[0])
            kv = dict(f.split("=", 1) for f in fields[1:])
            entry.status = kv.get("status", "failed")
            entry.cluster_id = None if kv.get("cluster", "-") == "-" else int(kv["cluster"])
            entry.ruleset_id = None if kv.get("ruleset", "-") == "-" else kv["ruleset"]
            entry.chars_kept = None if kv.get("kept", "-") == "-" else int(kv["kept"])
            entry.chars_removed = None if kv.get("removed", "-") == "-" else int(kv["removed"])
            entry.nodes_removed = None if kv.get("nodes", "-") == "-" else int(kv["nodes"])
            rules = kv.get("rules", "")
            if rules:
                entry.rule_counts = {
                    name: int(count)
                    for name, count in (pair.split(":") for pair in rules.split(","))
                }
            entry.chapter_count = None if kv.get("chapters", "-") == "-" else int(kv["chapters"])
            entry.audio_ms = None if kv.get("audio_ms", "-") == "-" else int(kv["audio_ms"])
            outputs = kv.get("outputs", "")
            entry.outputs = outputs.split(",") if outputs else []
            entry.error = kv.get("error", "")
            manifest.entries[entry.book_id] = entry
    return manifest


def write_manifest(manifest: Manifest, path: Path) -> None:
    """Atomic write: the manifest path never holds a partial file."""
    payload = serialize_manifest(manifest).encode("utf-8")
    fd, tmp_name = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_manifest(path: Path | str) -> Manifest:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def collection_stats(manifest: Manifest) -> dict[str, float]:
    done = [e for e in manifest.entries.values() if e.status == "done"]
    total_ms = sum(e.audio_ms or 0 for e in done)
    return {"books_done": len(done), "total_hours": total_ms / 3_600_000.0}


# --- per-book work -----------------------------------------------------------

@dataclass
class _BookWork:
    ref: ingest.EbookRef
    doc: Optional[ingest.EbookDocument] = None
    tree: Optional[dom.DomTree] = None
    tokens: Optional[list[str]] = None
    handcrafted: Optional[list[float]] = None
    vector: Optional[list[float]] = None
    entry: Optional[BookEntry] = None
    normalized: Optional[normalize_mod.NormalizedBook] = None
    script: Optional[script_mod.NarrationScript] = None


def _now_iso() -> str:
    import datetime

    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _run_parallel(
    items: list,
    fn: Callable,
    worker_count: int,
) -> None:
    if worker_count <= 1 or len(items) <= 1:
        for item in items:
            fn(item)
        return
    with ThreadPoolExecutor(max_workers=worker_count) as pool:
        list(pool.map(fn, items))


def chapter_plan(chapter: script_mod.Chapter) -> list[tuple[script_mod.Segment, int]]:
    """Flatten one chapter into (segment, gap_before_ms) pairs.

    Mirrors the SSML layout: 500 ms at paragraph boundaries (the heading
    counts as a paragraph), 200 ms between segments within a paragraph.
    """
    items: list[tuple[script_mod.Segment, int]] = []
    if chapter.heading:
        items.append((script_mod.Segment(kind="narration", text=chapter.heading), 0))
    for para in chapter.paragraphs:
        for s_idx, seg in enumerate(para.segments):
            if not items:
                gap = 0
            elif s_idx == 0:
                gap = script_mod.PARAGRAPH_BREAK_MS
            else:
                gap = script_mod.SEGMENT_BREAK_MS
            items.append((seg, gap))
    return items


def synthesize_chapter(
    chapter: script_mod.Chapter,
    cast: dict[str, script_mod.VoiceSpec],
    backend: synth_mod.Backend,
    out_path: Path,
    rate: float = 1.0,
    pitch: float = 0.0,
    sample_rate_hz: int = audio_mod.DEFAULT_SAMPLE_RATE,
    emotion_styles: Optional[dict[str, str]] = None,
) -> int:
    """Synthesize and assemble one chapter WAV; returns its sample count."""
    styles = emotion_styles or {}
    items = chapter_plan(chapter)
    clips: list[audio_mod.AudioClip] = []
    gaps: list[int] = []
    for i, (seg, gap) in enumerate(items):
        spec = cast.get(seg.speaker)
        if spec is None:
            raise script_mod.UnmappedVoice(seg.speaker)
        req = synth_mod.SynthesisRequest(
            ssml=seg.text,
            voice_id=spec.voice_id,
            rate=spec.rate * rate,
            pitch=spec.pitch + pitch,
            sample_rate_hz=sample_rate_hz,
            emotion_style=styles.get(seg.emotion) if seg.kind == "dialogue" else None,
        )
        clips.append(backend.synthesize(req))
        if i > 0:
            gaps.append(gap)
    return audio_mod.assemble_audio(clips, gaps, out_path, sample_rate_hz=sample_rate_hz)


# --- pipeline ------------------------------------------------------------------

class _Runner:
    def __init__(self, config: PipelineConfig):
        config.validate()
        self.config = config
        self.out = Path(config.output_root)
        self.manifest = Manifest(fingerprint=config.fingerprint(), started=_now_iso())

    # stage helpers -----------------------------------------------------------

    def _book_dir(self, book_id: str) -> Path:
        d = self.out / book_id
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _checkpoint(self) -> None:
        write_manifest(self.manifest, self.out / MANIFEST_NAME)

    def _fail(self, work: _BookWork, exc: Exception) -> None:
        work.entry.status = "failed"
        work.entry.error = f"{type(exc).__name__}: {exc}"

    def stage_features(self, works: list[_BookWork]) -> None:
        def one(work: _BookWork) -> None:
            try:
                work.doc = ingest.load_ebook(work.ref)
                work.tree = parse_html(work.doc.raw_html)
                work.tokens, work.handcrafted = features_mod.featurize_book(work.tree)
            except Exception as exc:
                self._fail(work, exc)

        _run_parallel(works, one, self.config.worker_count)
        good = [w for w in works if w.tokens is not None]
        if not good:
            return
        vocab = features_mod.build_vocabulary(
            [w.tokens for w in good], self.config.min_df, self.config.max_terms
        )
        stats = features_mod.corpus_stats([w.handcrafted for w in good])
        vectors = []
        for w in good:
            fv = features_mod.assemble_features(
                w.ref.book_id, features_mod.tfidf(w.tokens, vocab),
                w.handcrafted, stats, len(vocab.terms),
            )
            w.vector = fv.combined
            vectors.append(fv)
        features_mod.write_matrix(vectors, self.out / FEATURES_NAME)
        _write_vocab(vocab, self.out / VOCAB_NAME)
        _write_stats(stats, self.out / STATS_NAME)

    def stage_cluster(self, works: list[_BookWork]) -> None:
        good = [w for w in works if w.vector is not None]
        if not good:
            return
        try:
            model = cluster_mod.kmeans_fit(
                [w.vector for w in good], self.config.k, seed=self.config.seed
            )
        except KTooLarge as exc:
            raise ConfigInvalid(str(exc))
        cluster_mod.save_model(model, self.out / MODEL_NAME)
        for w in good:
            cid, _ = cluster_mod.assign(model, w.vector)
            w.entry.cluster_id = cid

    def stage_normalize(self, works: list[_BookWork]) -> None:
        def one(work: _BookWork) -> None:
            if work.entry.status == "failed" or work.tree is None:
                return
            try:
                ruleset_id = normalize_mod.classify_ruleset(
                    work.entry.cluster_id, self.config.keep_list
                )
                if ruleset_id is None:
                    work.entry.status = "excluded"
                    return
                ruleset = self.config.ruleset_for(ruleset_id)
                work.normalized = normalize_mod.apply_rules(
                    work.tree, ruleset, work.ref.book_id
                )
                work.entry.ruleset_id = ruleset_id
                report = work.normalized.report
                work.entry.chars_kept = report.characters_kept
                work.entry.chars_removed = report.characters_removed
                work.entry.nodes_removed = sum(report.rule_counts.values())
                work.entry.rule_counts = dict(report.rule_counts)
                report_path = self._book_dir(work.ref.book_id) / "report.v1"
                normalize_mod.write_report(report, report_path)
                work.entry.outputs.append(f"{work.ref.book_id}/report.v1")
            except Exception as exc:
                self._fail(work, exc)

        _run_parallel(works, one, self.config.worker_count)

    def stage_script(self, works: list[_BookWork]) -> None:
        def one(work: _BookWork) -> None:
            if work.entry.status in ("failed", "excluded") or work.normalized is None:
                return
            try:
                work.script = script_mod.build_script(
                    work.normalized,
                    metadata=work.doc.metadata if work.doc else None,
                    voice_pool=self.config.voice_pool,
                    narrator_voice=self.config.narrator_voice,
                )
                book_dir = self._book_dir(work.ref.book_id)
                script_mod.save_script(work.script, book_dir / "script.v1")
                work.entry.outputs.append(f"{work.ref.book_id}/script.v1")
                docs = script_mod.export_ssml(
                    work.script, rate=self.config.rate, pitch=self.config.pitch,
                    emotion_style_map=self.config.emotion_styles,
                )
                for chapter, doc in zip(work.script.chapters, docs):
                    name = f"ch{chapter.index:03d}.ssml"
                    (book_dir / name).write_text(doc, encoding="utf-8")
                    work.entry.outputs.append(f"{work.ref.book_id}/{name}")
                work.entry.chapter_count = len(work.script.chapters)
            except Exception as exc:
                self._fail(work, exc)

        _run_parallel(works, one, self.config.worker_count)

    def stage_audio(self, works: list[_BookWork]) -> None:
        backend = self.config.make_backend()

        def one(work: _BookWork) -> None:
            if work.entry.status in ("failed", "excluded") or work.script is None:
                return
            try:
                book_dir = self._book_dir(work.ref.book_id)
                total_ms = 0
                for chapter in work.script.chapters:
                    name = f"ch{chapter.index:03d}.wav"
                    n_samples = synthesize_chapter(
                        chapter, work.script.cast, backend, book_dir / name,
                        rate=self.config.rate, pitch=self.config.pitch,
                        sample_rate_hz=self.config.sample_rate_hz,
                        emotion_styles=self.config.emotion_styles,
                    )
                    total_ms += round(n_samples * 1000 / self.config.sample_rate_hz)
                    work.entry.outputs.append(f"{work.ref.book_id}/{name}")
                work.entry.audio_ms = total_ms
            except Exception as exc:
                self._fail(work, exc)

        _run_parallel(works, one, self.config.worker_count)

    # main ----------------------------------------------------------------------

    def run(self, works: list[_BookWork]) -> Manifest:
        stage_fns = {
            "features": self.stage_features,
            "cluster": self.stage_cluster,
            "normalize": self.stage_normalize,
            "script": self.stage_script,
            "audio": self.stage_audio,
        }
        self.out.mkdir(parents=True, exist_ok=True)
        for work in works:
            if work.entry is None:
                work.entry = BookEntry(book_id=work.ref.book_id, status="done")
            self.manifest.entries[work.ref.book_id] = work.entry
        for stage in self.config.stages:
            stage_fns[stage](works)
            self.manifest.finished = _now_iso()
            self._checkpoint()
        for work in works:
            if work.entry.status not in ("excluded", "failed"):
                work.entry.status = "done"
        self.manifest.finished = _now_iso()
        self._checkpoint()
        return self.manifest


def run_pipeline(config: PipelineConfig) -> Manifest:
    config.validate()
    refs = ingest.scan_corpus(config.corpus_root)
    if not refs:
        raise CorpusEmpty(str(config.corpus_root))
    works = [_BookWork(ref=ref, entry=BookEntry(book_id=ref.book_id, status="done")) for ref in refs]
    return _Runner(config).run(works)


def resume(config: PipelineConfig) -> Manifest:
    """Re-run only books whose outputs are missing or not done.

    Feature vectors, corpus stats, and the cluster model are reloaded from
    the previous run's files, so the rebuilt entries match a fresh full
    run entry for entry.
    """
    config.validate()
    out = Path(config.output_root)
    manifest_path = out / MANIFEST_NAME
    old = load_manifest(manifest_path)
    if old.fingerprint != config.fingerprint():
        raise FingerprintMismatch(
            f"manifest {old.fingerprint[:12]} vs config {config.fingerprint()[:12]}"
        )
    refs = ingest.scan_corpus(config.corpus_root)
    if not refs:
        raise CorpusEmpty(str(config.corpus_root))

    def is_complete(entry: Optional[BookEntry]) -> bool:
        if entry is None or entry.status != "done":
            return False
        return all((out / rel).exists() for rel in entry.outputs)

    todo: list[_BookWork] = []
    kept: dict[str, BookEntry] = {}
    for ref in refs:
        entry = old.entries.get(ref.book_id)
        if is_complete(entry):
            kept[ref.book_id] = entry
        else:
            fresh = BookEntry(book_id=ref.book_id, status="done")
            if entry is not None and entry.cluster_id is not None:
                fresh.cluster_id = entry.cluster_id
            todo.append(_BookWork(ref=ref, entry=fresh))

    new_manifest = Manifest(
        fingerprint=config.fingerprint(), started=old.started or _now_iso()
    )
    new_manifest.entries.update(kept)
    if todo:
        model = cluster_mod.load_model(out / MODEL_NAME) if (out / MODEL_NAME).exists() else None
        vocab = _read_vocab(out / VOCAB_NAME) if (out / VOCAB_NAME).exists() else None
        stats = _read_stats(out / STATS_NAME) if (out / STATS_NAME).exists() else None
        runner = _Runner(config)
        runner.manifest = new_manifest

        def one(work: _BookWork) -> None:
            try:
                work.doc = ingest.load_ebook(work.ref)
                work.tree = parse_html(work.doc.raw_html)
                if work.entry.cluster_id is None and "cluster" in config.stages:
                    if model is None or vocab is None or stats is None:
                        raise ConfigInvalid("missing model/vocab/stats files; run a full build")
                    tokens, handcrafted = features_mod.featurize_book(work.tree)
                    fv = features_mod.assemble_features(
                        work.ref.book_id, features_mod.tfidf(tokens, vocab),
                        handcrafted, stats, len(vocab.terms),
                    )
                    cid, _ = cluster_mod.assign(model, fv.combined)
                    work.entry.cluster_id = cid
            except Exception as exc:
                runner._fail(work, exc)

        _run_parallel(todo, one, config.worker_count)
        for entry_stage in ("normalize", "script", "audio"):
            if entry_stage in config.stages:
                getattr(runner, f"stage_{entry_stage}")(todo)
        for work in todo:
            new_manifest.entries[work.ref.book_id] = work.entry
            if work.entry.status not in ("excluded", "failed"):
                work.entry.status = "done"
    new_manifest.finished = _now_iso()
    write_manifest(new_manifest, manifest_path)
    return new_manifest


# --- vocab / stats files --------------------------------------------------------

def _write_vocab(vocab: features_mod.Vocabulary, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"vocab v1 n={vocab.corpus_size}\n")
        for term in vocab.terms:
            fh.write(f"{term}\t{vocab.doc_freq[term]}\n")


def _read_vocab(path: Path) -> features_mod.Vocabulary:
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split()
    n = int(header[2].split("=")[1])
    terms: list[str] = []
    doc_freq: dict[str, int] = {}
    for line in lines[1:]:
        if not line:
            continue
        term, df = line.split("\t")
        terms.append(term)
        doc_freq[term] = int(df)
    return features_mod.Vocabulary(terms=terms, doc_freq=doc_freq, corpus_size=n)


def _write_stats(stats: tuple[list[float], list[float]], path: Path) -> None:
    means, stds = stats
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("stats v1\n")
        fh.write("means\t" + "\t".join(repr(v) for v in means) + "\n")
        fh.write("stds\t" + "\t".join(repr(v) for v in stds) + "\n")


def _read_stats(path: Path) -> tuple[list[float], list[float]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    means = [float(v) for v in lines[1].split("\t")[1:]]
    stds = [float(v) for v in lines[2].split("\t")[1:]]
    return means, stds
