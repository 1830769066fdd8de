"""HTTP API for the interactive demo flow.

Contract (JSON bodies unless noted):

    GET  /books?q=&limit=       search titles/authors
    GET  /books/{book_id}       one summary
    GET  /voices                builtin + enrolled voices
    POST /voices/enroll         multipart WAV upload -> {"voice_id": ...}
    POST /preview               synchronous WAV preview of a chapter head
    POST /jobs                  submit a full audiobook build -> 202
    GET  /jobs/{job_id}         job record
    GET  /jobs/{job_id}/artifact  zip download once done (409 before)

Jobs persist as one atomically-replaced file each under the jobs
directory; a restart re-queues anything found in the running state, and
finished artifacts are never rebuilt.
"""

from __future__ import annotations

import json
import queue
import re
import secrets
import threading
import zipfile
from contextlib import asynccontextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import audio as audio_mod
from . import pipeline as pipeline_mod
from . import script as script_mod
from . import synth as synth_mod
from .errors import AudioTooShort, BackendError, MalformedAudio, PagecastError

MAX_UPLOAD_BYTES = 20 * 1024 * 1024
_SENTENCE_SPLIT = re.compile(r"(?<=[.?!])\s+")


@dataclass
class ServiceConfig:
    pipeline: pipeline_mod.PipelineConfig
    host: str = "127.0.0.1"
    port: int = 8080
    jobs_dir: Path = Path("jobs")
    voices_dir: Path = Path("voices")
    preview_sentences: int = 5
    preview_concurrency: int = 4
    queue_cap: int = 64
    job_workers: int = 2
    cors_origin: str = "*"

    @classmethod
    def from_mapping(
        cls,
        tree: dict,
        pipeline_config: pipeline_mod.PipelineConfig,
        base_dir: Optional[Path] = None,
    ) -> "ServiceConfig":
        base = base_dir or Path(".")
        svc = tree.get("service", {})

        def resolve(p: str) -> Path:
            path = Path(p)
            return path if path.is_absolute() else base / path

        return cls(
            pipeline=pipeline_config,
            host=str(svc.get("host", "127.0.0.1")),
            port=int(svc.get("port", 8080)),
            jobs_dir=resolve(svc.get("jobs_dir", "jobs")),
            voices_dir=resolve(svc.get("voices_dir", "voices")),
            preview_sentences=int(svc.get("preview_sentences", 5)),
            preview_concurrency=int(svc.get("preview_concurrency", 4)),
            queue_cap=int(svc.get("queue_cap", 64)),
            job_workers=int(svc.get("job_workers", 2)),
            cors_origin=str(svc.get("cors_origin", "*")),
        )


@dataclass
class BookSummary:
    book_id: str
    title: str
    author: str
    chapter_count: int
    cluster_id: Optional[int]
    eligible: bool

    def as_json(self) -> dict:
        return {
            "book_id": self.book_id,
            "title": self.title,
            "author": self.author,
            "chapter_count": self.chapter_count,
            "cluster_id": self.cluster_id,
            "eligible": self.eligible,
        }


@dataclass
class JobRecord:
    job_id: str
    book_id: str
    voice_id: str
    rate: float = 1.0
    pitch: float = 0.0
    dedication: str = ""
    status: str = "queued"  # queued | running | done | failed
    created: str = ""
    updated: str = ""
    artifact_path: str = ""
    error: str = ""

    def as_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "book_id": self.book_id,
            "voice_id": self.voice_id,
            "rate": self.rate,
            "pitch": self.pitch,
            "dedication": self.dedication,
            "status": self.status,
            "created": self.created,
            "updated": self.updated,
            "artifact_path": self.artifact_path,
            "error": self.error,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class JobStore:
    """One structured-text file per job, replaced atomically on update."""

    def __init__(self, jobs_dir: Path):
        self.jobs_dir = Path(jobs_dir)
        self.jobs_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, job_id: str) -> Path:
        return self.jobs_dir / f"{job_id}.job"

    def save(self, record: JobRecord) -> None:
        record.updated = _now()
        lines = ["job v1"]
        for key, value in record.as_json().items():
            lines.append(f"{key}\t{value}")
        payload = "\n".join(lines) + "\n"
        path = self._path(record.job_id)
        with self._lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(payload, encoding="utf-8")
            tmp.replace(path)

    def load(self, job_id: str) -> Optional[JobRecord]:
        path = self._path(job_id)
        if not path.exists():
            return None
        lines = path.read_text(encoding="utf-8").splitlines()
        kv: dict[str, str] = {}
        for line in lines[1:]:
            key, _, value = line.partition("\t")
            kv[key] = value
        return JobRecord(
            job_id=kv.get("job_id", job_id),
            book_id=kv.get("book_id", ""),
            voice_id=kv.get("voice_id", ""),
            rate=float(kv.get("rate", "1.0")),
            pitch=float(kv.get("pitch", "0.0")),
            dedication=kv.get("dedication", ""),
            status=kv.get("status", "queued"),
            created=kv.get("created", ""),
            updated=kv.get("updated", ""),
            artifact_path=kv.get("artifact_path", ""),
            error=kv.get("error", ""),
        )

    def all_jobs(self) -> list[JobRecord]:
        records = []
        for path in sorted(self.jobs_dir.glob("*.job")):
            record = self.load(path.stem)
            if record is not None:
                records.append(record)
        return records


class VoiceStore:
    """Builtin voices from config plus enrolled profiles on disk."""

    def __init__(self, voices_dir: Path, builtin: list[str]):
        self.voices_dir = Path(voices_dir)
        self.voices_dir.mkdir(parents=True, exist_ok=True)
        self.builtin = list(dict.fromkeys(builtin))

    def enrolled_ids(self) -> list[str]:
        return sorted(p.stem for p in self.voices_dir.glob("*.profile"))

    def known(self, voice_id: str) -> bool:
        return voice_id in self.builtin or voice_id in self.enrolled_ids()

    def add(self, profile: synth_mod.VoiceProfile, wav_data: bytes) -> None:
        (self.voices_dir / f"{profile.voice_id}.wav").write_bytes(wav_data)
        payload = (
            f"voice v1\nvoice_id\t{profile.voice_id}\norigin\t{profile.origin}\n"
            f"ref\t{profile.enrollment_audio_ref or ''}\n"
        )
        tmp = self.voices_dir / f"{profile.voice_id}.tmp"
        tmp.write_text(payload, encoding="utf-8")
        tmp.replace(self.voices_dir / f"{profile.voice_id}.profile")

    def listing(self) -> list[dict]:
        voices = [{"voice_id": v, "origin": "builtin"} for v in self.builtin]
        voices.extend(
            {"voice_id": v, "origin": "enrolled"} for v in self.enrolled_ids()
        )
        return voices


def _build_index(config: ServiceConfig) -> dict[str, BookSummary]:
    """Book summaries from the manifest plus per-book script files."""
    out = Path(config.pipeline.output_root)
    manifest_path = out / pipeline_mod.MANIFEST_NAME
    index: dict[str, BookSummary] = {}
    if not manifest_path.exists():
        return index
    manifest = pipeline_mod.load_manifest(manifest_path)
    keep = config.pipeline.keep_list
    for book_id, entry in sorted(manifest.entries.items()):
        title, author, chapters = book_id, "", 0
        script_path = out / book_id / "script.v1"
        if script_path.exists():
            script = script_mod.load_script(script_path)
            title = script.title or book_id
            author = script.author
            chapters = len(script.chapters)
        eligible = entry.cluster_id is not None and entry.cluster_id in keep
        index[book_id] = BookSummary(
            book_id=book_id,
            title=title,
            author=author,
            chapter_count=chapters,
            cluster_id=entry.cluster_id,
            eligible=eligible,
        )
    return index


def search_books(
    index: dict[str, BookSummary], query: str, limit: int
) -> list[BookSummary]:
    """Substring search over title and author with deterministic ranking."""
    books = [index[k] for k in sorted(index)]
    if not query:
        return books[:limit]
    q = query.lower()
    ranked: list[tuple[int, int, str, BookSummary]] = []
    for book in books:
        matches = int(q in book.title.lower()) + int(q in book.author.lower())
        if matches:
            ranked.append((-matches, len(book.title), book.book_id, book))
    ranked.sort(key=lambda r: (r[0], r[1], r[2]))
    return [r[3] for r in ranked[:limit]]


def chapter_sentences(chapter: script_mod.Chapter) -> list[str]:
    text = " ".join(
        seg.text for para in chapter.paragraphs for seg in para.segments
    )
    return [s for s in _SENTENCE_SPLIT.split(text) if s]


class PreviewRequest(BaseModel):
    book_id: str
    chapter: int = 1
    sentence_count: Optional[int] = None
    voice_id: str
    rate: float = 1.0
    pitch: float = 0.0


class JobRequest(BaseModel):
    book_id: str
    voice_id: str
    rate: float = 1.0
    pitch: float = 0.0
    dedication: str = ""


class _JobRunner:
    def __init__(self, config: ServiceConfig, store: JobStore, backend: synth_mod.Backend):
        self.config = config
        self.store = store
        self.backend = backend
        self.queue: "queue.Queue[str]" = queue.Queue()
        self.stop_event = threading.Event()
        self.threads: list[threading.Thread] = []

    def start(self) -> None:
        for record in sorted(self.store.all_jobs(), key=lambda r: (r.created, r.job_id)):
            if record.status == "running":
                record.status = "queued"
                self.store.save(record)
            if record.status == "queued":
                self.queue.put(record.job_id)
        for i in range(self.config.job_workers):
            t = threading.Thread(target=self._loop, name=f"job-worker-{i}", daemon=True)
            t.start()
            self.threads.append(t)

    def stop(self) -> None:
        self.stop_event.set()
        for t in self.threads:
            t.join(timeout=5)

    def submit(self, job_id: str) -> None:
        self.queue.put(job_id)

    def _loop(self) -> None:
        while not self.stop_event.is_set():
            try:
                job_id = self.queue.get(timeout=0.1)
            except queue.Empty:
                continue
            record = self.store.load(job_id)
            if record is None or record.status not in ("queued",):
                continue
            record.status = "running"
            self.store.save(record)
            try:
                artifact = self._build(record)
                record.artifact_path = str(artifact)
                record.status = "done"
            except Exception as exc:
                record.status = "failed"
                record.error = f"{type(exc).__name__}: {exc}"
            self.store.save(record)

    def _build(self, record: JobRecord) -> Path:
        pipe = self.config.pipeline
        script_path = Path(pipe.output_root) / record.book_id / "script.v1"
        if not script_path.exists():
            raise PagecastError(f"no script for {record.book_id}; build the corpus first")
        script = script_mod.load_script(script_path)
        cast = {
            speaker: script_mod.VoiceSpec(record.voice_id)
            for speaker in script.cast
        }
        chapters = list(script.chapters)
        if record.dedication:
            chapters.insert(0, script_mod.Chapter(
                index=0,
                heading="",
                paragraphs=[script_mod.Paragraph(segments=[
                    script_mod.Segment(kind="narration", text=record.dedication)
                ])],
            ))
        job_dir = self.store.jobs_dir / record.job_id
        job_dir.mkdir(parents=True, exist_ok=True)
        wav_names: list[str] = []
        for chapter in chapters:
            name = f"ch{chapter.index:03d}.wav"
            pipeline_mod.synthesize_chapter(
                chapter, cast, self.backend, job_dir / name,
                rate=record.rate, pitch=record.pitch,
                sample_rate_hz=pipe.sample_rate_hz,
                emotion_styles=pipe.emotion_styles,
            )
            wav_names.append(name)
        artifact = job_dir / "artifact.zip"
        with zipfile.ZipFile(artifact, "w", zipfile.ZIP_DEFLATED) as zf:
            fixed = (1980, 1, 1, 0, 0, 0)
            info = zipfile.ZipInfo("script.v1", date_time=fixed)
            zf.writestr(info, script_path.read_bytes())
            for name in wav_names:
                info = zipfile.ZipInfo(name, date_time=fixed)
                zf.writestr(info, (job_dir / name).read_bytes())
        return artifact


def create_app(config: ServiceConfig) -> FastAPI:
    backend = config.pipeline.make_backend()
    store = JobStore(config.jobs_dir)
    voices = VoiceStore(
        config.voices_dir,
        [config.pipeline.narrator_voice, *config.pipeline.voice_pool],
    )
    runner = _JobRunner(config, store, backend)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        runner.start()
        yield
        runner.stop()

    app = FastAPI(title="pagecast service", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[config.cors_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.config = config
    app.state.store = store
    app.state.voices = voices
    app.state.runner = runner
    app.state.index = _build_index(config)
    preview_slots = threading.Semaphore(config.preview_concurrency)

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message})

    @app.get("/books")
    def books(q: str = "", limit: int = 20):
        return [b.as_json() for b in search_books(app.state.index, q, limit)]

    @app.get("/books/{book_id}")
    def book(book_id: str):
        summary = app.state.index.get(book_id)
        if summary is None:
            return error(404, f"unknown book {book_id}")
        return summary.as_json()

    @app.get("/voices")
    def list_voices():
        return voices.listing()

    @app.post("/voices/enroll")
    async def enroll(file: UploadFile):
        data = await file.read()
        if len(data) > MAX_UPLOAD_BYTES:
            return error(413, "payload too large")
        try:
            profile = synth_mod.enroll_voice(data, backend)
        except AudioTooShort as exc:
            return error(422, f"audio too short: {exc}")
        except (MalformedAudio, BackendError) as exc:
            return error(422, f"bad audio: {exc}")
        voices.add(profile, data)
        return {"voice_id": profile.voice_id}

    @app.post("/preview")
    def preview(req: PreviewRequest):
        if req.sentence_count is not None and req.sentence_count < 1:
            return error(400, "sentence_count must be >= 1")
        sentence_count = req.sentence_count or config.preview_sentences
        summary = app.state.index.get(req.book_id)
        if summary is None:
            return error(404, f"unknown book {req.book_id}")
        if not summary.eligible:
            return error(409, f"book {req.book_id} is not eligible")
        if not voices.known(req.voice_id):
            return error(422, f"unknown voice {req.voice_id}")
        script_path = Path(config.pipeline.output_root) / req.book_id / "script.v1"
        if not script_path.exists():
            return error(404, f"no script for {req.book_id}")
        script = script_mod.load_script(script_path)
        if not 1 <= req.chapter <= len(script.chapters):
            return error(400, f"chapter {req.chapter} out of range")
        sentences = chapter_sentences(script.chapters[req.chapter - 1])
        text = " ".join(sentences[:sentence_count])
        if not preview_slots.acquire(blocking=False):
            return error(429, "too many concurrent previews")
        try:
            clip = backend.synthesize(synth_mod.SynthesisRequest(
                ssml=text,
                voice_id=req.voice_id,
                rate=req.rate,
                pitch=req.pitch,
                sample_rate_hz=config.pipeline.sample_rate_hz,
            ))
        except BackendError as exc:
            return error(502, f"backend failed: {exc}")
        except ValueError as exc:
            return error(400, str(exc))
        finally:
            preview_slots.release()
        return Response(
            content=audio_mod.wav_bytes(clip.samples, clip.sample_rate_hz),
            media_type="audio/wav",
        )

    @app.post("/jobs")
    def create_job(req: JobRequest):
        summary = app.state.index.get(req.book_id)
        if summary is None:
            return error(404, f"unknown book {req.book_id}")
        if not summary.eligible:
            return error(409, f"book {req.book_id} is not eligible")
        if not voices.known(req.voice_id):
            return error(422, f"unknown voice {req.voice_id}")
        if len(req.dedication) > 500:
            return error(422, "dedication longer than 500 characters")
        if not 0.5 <= req.rate <= 3.0:
            return error(422, f"rate {req.rate} outside [0.5, 3.0]")
        queued = sum(1 for r in store.all_jobs() if r.status in ("queued", "running"))
        if queued >= config.queue_cap:
            return error(429, "job queue is full")
        record = JobRecord(
            job_id=secrets.token_hex(16),
            book_id=req.book_id,
            voice_id=req.voice_id,
            rate=req.rate,
            pitch=req.pitch,
            dedication=req.dedication,
            created=_now(),
        )
        store.save(record)
        runner.submit(record.job_id)
        return JSONResponse(status_code=202, content=record.as_json())

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        record = store.load(job_id)
        if record is None:
            return error(404, f"unknown job {job_id}")
        return record.as_json()

    @app.get("/jobs/{job_id}/artifact")
    def artifact(job_id: str):
        record = store.load(job_id)
        if record is None:
            return error(404, f"unknown job {job_id}")
        if record.status != "done" or not record.artifact_path:
            return error(409, f"job {job_id} is {record.status}")
        data = Path(record.artifact_path).read_bytes()
        return Response(
            content=data,
            media_type="application/zip",
            headers={"Content-Disposition": f'attachment; filename="{job_id}.zip"'},
        )

    return app
