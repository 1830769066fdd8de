"""PCM16 mono WAV writing, reading, and chapter assembly.

The writer emits the canonical 44-byte RIFF/WAVE layout: RIFF size
36+data, a 16-byte fmt chunk (PCM, 1 channel, 16 bits), then the data
chunk.  Sample data is little-endian int16, so chunk sizes are always
even and no pad bytes occur.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import MalformedAudio, MixedSampleRates

DEFAULT_SAMPLE_RATE = 22050


@dataclass
class AudioClip:
    samples: np.ndarray  # int16, mono
    sample_rate_hz: int
    source_segment_id: str = ""

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.int16)

    @property
    def duration_ms(self) -> int:
        return round(len(self.samples) * 1000 / self.sample_rate_hz)


def wav_bytes(samples: np.ndarray, sample_rate_hz: int) -> bytes:
    data = np.asarray(samples, dtype="<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    fmt = b"fmt " + struct.pack(
        "<IHHIIHH",
        16,                      # fmt chunk size
        1,                       # PCM
        1,                       # mono
        sample_rate_hz,
        sample_rate_hz * 2,      # byte rate
        2,                       # block align
        16,                      # bits per sample
    )
    return header + fmt + b"data" + struct.pack("<I", len(data)) + data


def write_wav(path: Union[Path, str], samples: np.ndarray, sample_rate_hz: int) -> None:
    Path(path).write_bytes(wav_bytes(samples, sample_rate_hz))


def read_wav(data: bytes) -> tuple[np.ndarray, int]:
    """Parse PCM16 mono WAV bytes; tolerant of extra chunks."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedAudio("not a RIFF/WAVE file")
    pos = 12
    sample_rate = None
    samples = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if size < 16:
                raise MalformedAudio("fmt chunk too short")
            fmt_tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
            if fmt_tag != 1 or channels != 1 or bits != 16:
                raise MalformedAudio("only PCM16 mono is supported")
            sample_rate = rate
        elif chunk_id == b"data":
            if len(body) < size:
                raise MalformedAudio("truncated data chunk")
            samples = np.frombuffer(body, dtype="<i2")
        pos += 8 + size + (size & 1)
    if sample_rate is None or samples is None:
        raise MalformedAudio("missing fmt or data chunk")
    return samples, sample_rate


def read_wav_file(path: Union[Path, str]) -> AudioClip:
    samples, rate = read_wav(Path(path).read_bytes())
    return AudioClip(samples=samples, sample_rate_hz=rate)


def gap_samples(gap_ms: int, sample_rate_hz: int) -> int:
    return round(gap_ms * sample_rate_hz / 1000)


def assemble_audio(
    clips: Sequence[AudioClip],
    gaps: Union[int, Sequence[int]],
    out_path: Union[Path, str],
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE,
) -> int:
    """Concatenate clips with silence between consecutive clips.

    ``gaps`` is either one milliseconds value applied at every boundary or
    a sequence with exactly len(clips)-1 entries.  Returns the total sample
    count written.
    """
    if clips:
        rates = {clip.sample_rate_hz for clip in clips}
        if len(rates) > 1:
            raise MixedSampleRates(str(sorted(rates)))
        sample_rate_hz = clips[0].sample_rate_hz
    n_boundaries = max(len(clips) - 1, 0)
    if isinstance(gaps, int):
        gap_list = [gaps] * n_boundaries
    else:
        gap_list = list(gaps)
        if len(gap_list) != n_boundaries:
            raise ValueError(
                f"need {n_boundaries} gap values for {len(clips)} clips, got {len(gap_list)}"
            )
    pieces: list[np.ndarray] = []
    for i, clip in enumerate(clips):
        if i > 0:
            pieces.append(np.zeros(gap_samples(gap_list[i - 1], sample_rate_hz), dtype=np.int16))
        pieces.append(clip.samples)
    merged = np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.int16)
    write_wav(out_path, merged, sample_rate_hz)
    return int(len(merged))


def silence_clip(duration_ms: int, sample_rate_hz: int = DEFAULT_SAMPLE_RATE) -> AudioClip:
    return AudioClip(
        samples=np.zeros(gap_samples(duration_ms, sample_rate_hz), dtype=np.int16),
        sample_rate_hz=sample_rate_hz,
    )


def duration_seconds(data: bytes) -> float:
    samples, rate = read_wav(data)
    return len(samples) / rate


__all__ = [
    "AudioClip", "assemble_audio", "duration_seconds", "gap_samples",
    "read_wav", "read_wav_file", "silence_clip", "wav_bytes", "write_wav",
    "DEFAULT_SAMPLE_RATE",
]
