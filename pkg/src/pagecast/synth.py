"""Speech synthesis backends behind one small contract.

``DeterministicBackend`` is the test backend: it reads each request's text
length and produces a sine tone whose duration follows the fixed
60 ms-per-character model (scaled by rate, plus any literal ``<break>``
durations), at 110 + (FNV-1a(voice_id) mod 880) Hz and 0.2 full-scale
amplitude.  ``RemoteBackend`` speaks the documented HTTP contract:

    POST <endpoint>/synthesize   body: SSML (or plain text)
         headers: X-Voice, X-Rate, X-Pitch, X-Sample-Rate,
                  X-Emotion-Style (optional), Authorization: Bearer <token>
         response: audio/wav bytes, or raw little-endian PCM16
    POST <endpoint>/enroll       body: WAV bytes
         response: JSON {"voice_id": "..."}

Transient failures (HTTP 429 and 5xx, plus connection errors) are retried
up to 3 times with 1s/2s/4s backoff inside a 120 s budget; other 4xx are
never retried.
"""

from __future__ import annotations

import json
import math
import re
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np
import requests

from .audio import AudioClip, read_wav
from .errors import (
    AudioTooShort,
    AuthFailed,
    BackendError,
    BackendRejectedSsml,
    Exhausted,
    MalformedSsml,
    Timeout,
)
from .hashing import fnv1a_64, fnv1a_64_str

MS_PER_CHAR = 60
AMPLITUDE = 0.2
MIN_ENROLL_SECONDS = 5.0
ALLOWED_SAMPLE_RATES = (16000, 22050, 24000, 44100)

_BREAK_TIME = re.compile(r"^(\d+(?:\.\d+)?)(ms|s)$")


@dataclass
class SynthesisRequest:
    ssml: str
    voice_id: str
    rate: float = 1.0
    pitch: float = 0.0
    sample_rate_hz: int = 22050
    emotion_style: Optional[str] = None

    def __post_init__(self) -> None:
        if not 0.5 <= self.rate <= 3.0:
            raise ValueError(f"rate {self.rate} outside [0.5, 3.0]")
        if self.sample_rate_hz not in ALLOWED_SAMPLE_RATES:
            raise ValueError(f"unsupported sample rate {self.sample_rate_hz}")


@dataclass
class VoiceProfile:
    voice_id: str
    origin: str  # "builtin" | "enrolled"
    enrollment_audio_ref: Optional[str] = None


class Backend(Protocol):
    def synthesize(self, req: SynthesisRequest) -> AudioClip: ...
    def enroll(self, wav_data: bytes) -> str: ...


def strip_ssml(ssml: str) -> tuple[str, int]:
    """Plain text and total literal break milliseconds of an SSML string.

    Strings without markup pass through unchanged.  Malformed markup
    raises MalformedSsml.
    """
    if "<" not in ssml:
        return ssml, 0
    try:
        root = ET.fromstring(ssml)
    except ET.ParseError as exc:
        raise MalformedSsml(str(exc))
    text_parts: list[str] = []
    break_ms = 0.0

    def visit(el: ET.Element) -> None:
        nonlocal break_ms
        tag = el.tag.rsplit("}", 1)[-1]
        if tag == "break":
            m = _BREAK_TIME.match(el.get("time", "0ms"))
            if m:
                value = float(m.group(1))
                break_ms += value * (1000.0 if m.group(2) == "s" else 1.0)
        if el.text:
            text_parts.append(el.text)
        for child in el:
            visit(child)
            if child.tail:
                text_parts.append(child.tail)

    visit(root)
    return "".join(text_parts), round(break_ms)


def tone_frequency(voice_id: str) -> int:
    return 110 + fnv1a_64_str(voice_id) % 880


class DeterministicBackend:
    """Offline stand-in for a TTS service; fully reproducible output."""

    def synthesize(self, req: SynthesisRequest) -> AudioClip:
        text, break_ms = strip_ssml(req.ssml)
        duration_ms = round(MS_PER_CHAR * len(text) / req.rate) + break_ms
        n = round(duration_ms * req.sample_rate_hz / 1000)
        freq = tone_frequency(req.voice_id)
        t = np.arange(n, dtype=float) / req.sample_rate_hz
        wave = AMPLITUDE * 32767.0 * np.sin(2.0 * math.pi * freq * t)
        return AudioClip(
            samples=np.round(wave).astype(np.int16),
            sample_rate_hz=req.sample_rate_hz,
        )

    def enroll(self, wav_data: bytes) -> str:
        samples, _ = read_wav(wav_data)
        digest = f"{fnv1a_64(samples.tobytes()):016x}"
        return "enrolled-" + digest[:8]


class RemoteBackend:
    """HTTP client for an external synthesis service."""

    MAX_RETRIES = 3
    BACKOFF_SECONDS = (1.0, 2.0, 4.0)
    TOTAL_TIMEOUT = 120.0

    def __init__(self, endpoint: str, auth_token: str = "", session: Optional[requests.Session] = None):
        self.endpoint = endpoint.rstrip("/")
        self.auth_token = auth_token
        self.session = session or requests.Session()

    def _headers(self, extra: dict[str, str]) -> dict[str, str]:
        headers = dict(extra)
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        return headers

    def _post_with_retries(self, url: str, data: bytes, headers: dict[str, str]) -> requests.Response:
        deadline = time.monotonic() + self.TOTAL_TIMEOUT
        attempt = 0
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise Timeout(url)
            try:
                resp = self.session.post(
                    url, data=data, headers=headers, timeout=remaining
                )
            except requests.Timeout:
                raise Timeout(url)
            except requests.RequestException as exc:
                resp = None
                failure: BackendError = BackendError(str(exc))
            if resp is not None:
                if resp.status_code in (401, 403):
                    raise AuthFailed(f"HTTP {resp.status_code}")
                if resp.status_code == 400:
                    raise BackendRejectedSsml(resp.text[:200])
                if resp.status_code < 400:
                    return resp
                if resp.status_code != 429 and resp.status_code < 500:
                    raise BackendError(f"HTTP {resp.status_code}")
                failure = BackendError(f"HTTP {resp.status_code}")
            if attempt >= self.MAX_RETRIES:
                raise Exhausted(str(failure))
            delay = min(self.BACKOFF_SECONDS[attempt], max(deadline - time.monotonic(), 0.0))
            time.sleep(delay)
            attempt += 1

    def synthesize(self, req: SynthesisRequest) -> AudioClip:
        headers = self._headers({
            "Content-Type": "application/ssml+xml",
            "X-Voice": req.voice_id,
            "X-Rate": repr(req.rate),
            "X-Pitch": repr(req.pitch),
            "X-Sample-Rate": str(req.sample_rate_hz),
        })
        if req.emotion_style:
            headers["X-Emotion-Style"] = req.emotion_style
        resp = self._post_with_retries(
            self.endpoint + "/synthesize", req.ssml.encode("utf-8"), headers
        )
        content_type = resp.headers.get("Content-Type", "")
        if "wav" in content_type:
            samples, rate = read_wav(resp.content)
            return AudioClip(samples=samples, sample_rate_hz=rate)
        samples = np.frombuffer(resp.content, dtype="<i2")
        return AudioClip(samples=samples, sample_rate_hz=req.sample_rate_hz)

    def enroll(self, wav_data: bytes) -> str:
        headers = self._headers({"Content-Type": "audio/wav"})
        resp = self._post_with_retries(self.endpoint + "/enroll", wav_data, headers)
        try:
            return json.loads(resp.content)["voice_id"]
        except (ValueError, KeyError) as exc:
            raise BackendError(f"bad enroll response: {exc}")


def enroll_voice(wav_data: bytes, backend: Backend) -> VoiceProfile:
    """Register a user voice from a WAV sample of at least 5 seconds."""
    samples, rate = read_wav(wav_data)
    duration = len(samples) / rate
    if duration < MIN_ENROLL_SECONDS:
        raise AudioTooShort(f"{duration:.2f}s < {MIN_ENROLL_SECONDS}s")
    voice_id = backend.enroll(wav_data)
    ref = f"fnv:{fnv1a_64(wav_data):016x}"
    return VoiceProfile(voice_id=voice_id, origin="enrolled", enrollment_audio_ref=ref)


def make_backend(kind: str, endpoint: str = "", auth_token: str = "") -> Backend:
    if kind == "deterministic":
        return DeterministicBackend()
    if kind == "remote":
        if not endpoint:
            raise ValueError("remote backend needs an endpoint")
        return RemoteBackend(endpoint, auth_token)
    raise ValueError(f"unknown backend kind {kind!r}")
