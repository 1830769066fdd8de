import struct
import wave
from io import BytesIO

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pagecast import audio as A
from pagecast.errors import MalformedAudio, MixedSampleRates


def clip(n, rate=22050, value=1000):
    return A.AudioClip(samples=np.full(n, value, dtype=np.int16), sample_rate_hz=rate)


def golden_header(n_samples: int, rate: int) -> bytes:
    """Independent layout oracle: the canonical 44-byte header via struct."""
    data_len = 2 * n_samples
    return (
        b"RIFF" + struct.pack("<I", 36 + data_len) + b"WAVE"
        + b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16)
        + b"data" + struct.pack("<I", data_len)
    )


class TestWavLayout:
    def test_header_bit_exact(self):
        samples = np.arange(100, dtype=np.int16)
        data = A.wav_bytes(samples, 22050)
        assert data[:44] == golden_header(100, 22050)
        assert data[44:] == samples.tobytes()

    def test_stdlib_wave_reads_it_back(self, tmp_path):
        samples = np.array([0, 100, -100, 32767, -32768], dtype=np.int16)
        path = tmp_path / "t.wav"
        A.write_wav(path, samples, 16000)
        with wave.open(str(path), "rb") as wf:
            assert wf.getnchannels() == 1
            assert wf.getsampwidth() == 2
            assert wf.getframerate() == 16000
            assert wf.getnframes() == 5
            assert np.frombuffer(wf.readframes(5), dtype="<i2").tolist() == samples.tolist()

    def test_data_chunk_size_is_2n(self):
        data = A.wav_bytes(np.zeros(321, dtype=np.int16), 22050)
        (declared,) = struct.unpack("<I", data[40:44])
        assert declared == 2 * 321

    def test_round_trip(self):
        samples = np.array([1, -2, 3], dtype=np.int16)
        parsed, rate = A.read_wav(A.wav_bytes(samples, 44100))
        assert rate == 44100
        assert parsed.tolist() == samples.tolist()

    def test_read_tolerates_extra_chunk(self):
        samples = np.array([5, 6], dtype=np.int16)
        base = A.wav_bytes(samples, 22050)
        extra = b"LIST" + struct.pack("<I", 4) + b"INFO"
        patched = base[:12] + extra + base[12:]
        riff_size = struct.unpack("<I", base[4:8])[0] + len(extra)
        patched = patched[:4] + struct.pack("<I", riff_size) + patched[8:]
        parsed, rate = A.read_wav(patched)
        assert parsed.tolist() == samples.tolist()

    def test_rejects_garbage(self):
        with pytest.raises(MalformedAudio):
            A.read_wav(b"not audio at all")

    def test_rejects_stereo(self):
        data = BytesIO()
        with wave.open(data, "wb") as wf:
            wf.setnchannels(2)
            wf.setsampwidth(2)
            wf.setframerate(22050)
            wf.writeframes(b"\x00\x00\x00\x00")
        with pytest.raises(MalformedAudio):
            A.read_wav(data.getvalue())


class TestAssemble:
    def test_single_clip_no_gaps(self, tmp_path):
        out = tmp_path / "out.wav"
        n = A.assemble_audio([clip(50)], [], out)
        assert n == 50
        data = out.read_bytes()
        (declared,) = struct.unpack("<I", data[40:44])
        assert declared == 100  # 2 bytes per sample

    def test_gap_sample_count(self, tmp_path):
        out = tmp_path / "out.wav"
        n = A.assemble_audio([clip(100), clip(200)], [200], out)
        assert n == 100 + 4410 + 200
        samples, rate = A.read_wav(out.read_bytes())
        assert rate == 22050
        assert (samples[100:4510] == 0).all()

    def test_uniform_gap_int(self, tmp_path):
        n = A.assemble_audio([clip(10), clip(10), clip(10)], 100, tmp_path / "o.wav")
        gap = round(100 * 22050 / 1000)
        assert n == 30 + 2 * gap

    def test_zero_clips_valid_wav(self, tmp_path):
        out = tmp_path / "empty.wav"
        n = A.assemble_audio([], [], out)
        assert n == 0
        data = out.read_bytes()
        assert data[:44] == golden_header(0, 22050)
        assert len(data) == 44

    def test_mixed_rates_rejected(self, tmp_path):
        with pytest.raises(MixedSampleRates):
            A.assemble_audio([clip(10, 22050), clip(10, 16000)], [0], tmp_path / "x.wav")

    def test_wrong_gap_count_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            A.assemble_audio([clip(10), clip(10)], [100, 100], tmp_path / "x.wav")


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(0, 400), min_size=0, max_size=5),
    st.integers(0, 500),
)
def test_assemble_conservation_property(tmp_path_factory, lengths, gap_ms):
    out = tmp_path_factory.mktemp("cons") / "o.wav"
    clips = [clip(n) for n in lengths]
    total = A.assemble_audio(clips, gap_ms, out)
    boundaries = max(len(clips) - 1, 0)
    assert total == sum(lengths) + boundaries * A.gap_samples(gap_ms, 22050)
    samples, _ = A.read_wav(out.read_bytes())
    assert len(samples) == total
