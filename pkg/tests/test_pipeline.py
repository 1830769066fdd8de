import os
from pathlib import Path

import pytest

from pagecast import pipeline as P
from pagecast.errors import ConfigInvalid, CorpusEmpty, FingerprintMismatch

from conftest import CORPUS, copy_built, make_config


class TestConfig:
    def test_stage_prefix_enforced(self, tmp_path):
        cfg = make_config(CORPUS, tmp_path, stages=("features", "cluster"))
        cfg.validate()
        bad = make_config(CORPUS, tmp_path, stages=("cluster",))
        with pytest.raises(ConfigInvalid):
            bad.validate()
        empty = make_config(CORPUS, tmp_path, stages=())
        with pytest.raises(ConfigInvalid):
            empty.validate()

    def test_worker_count_positive(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            make_config(CORPUS, tmp_path, worker_count=0).validate()

    def test_fingerprint_ignores_paths_and_workers(self, tmp_path):
        a = make_config(CORPUS, tmp_path / "a", worker_count=1)
        b = make_config(CORPUS, tmp_path / "b", worker_count=8)
        assert a.fingerprint() == b.fingerprint()

    def test_fingerprint_tracks_semantics(self, tmp_path):
        a = make_config(CORPUS, tmp_path)
        b = make_config(CORPUS, tmp_path, k=4)
        c = make_config(CORPUS, tmp_path, keep_list={0: "std-v1"})
        assert a.fingerprint() != b.fingerprint()
        assert a.fingerprint() != c.fingerprint()

    def test_from_mapping_defaults_and_overrides(self, tmp_path):
        tree = {
            "corpus": {"root": "books"},
            "output": {"root": "out"},
            "cluster": {"k": 5, "seed": 3},
            "keep": {"0": "std-v1", "2": "custom"},
            "voices": {"narrator": "n1", "pool": ["a", "b"]},
            "run": {"workers": 4, "stages": ["features", "cluster"]},
        }
        cfg = P.config_from_mapping(tree, base_dir=tmp_path)
        assert cfg.corpus_root == tmp_path / "books"
        assert cfg.k == 5 and cfg.seed == 3
        assert cfg.keep_list == {0: "std-v1", 2: "custom"}
        assert cfg.voice_pool == ("a", "b")
        assert cfg.stages == ("features", "cluster")


class TestManifestFile:
    def _manifest(self):
        m = P.Manifest(fingerprint="abc123", started="T1", finished="T2")
        m.entries["pg2"] = P.BookEntry(
            book_id="pg2", status="done", cluster_id=1, ruleset_id="std-v1",
            chars_kept=10, chars_removed=2, nodes_removed=3,
            rule_counts={"boilerplate": 1, "toc": 2},
            chapter_count=2, audio_ms=1234,
            outputs=["pg2/script.v1", "pg2/ch001.wav"],
        )
        m.entries["pg1"] = P.BookEntry(book_id="pg1", status="failed", error="boom\tnewline\nhere")
        return m

    def test_round_trip(self):
        m = self._manifest()
        parsed = P.parse_manifest(P.serialize_manifest(m))
        assert parsed.fingerprint == "abc123"
        assert parsed.started == "T1" and parsed.finished == "T2"
        assert sorted(parsed.entries) == ["pg1", "pg2"]
        e = parsed.entries["pg2"]
        assert (e.status, e.cluster_id, e.ruleset_id) == ("done", 1, "std-v1")
        assert e.rule_counts == {"boilerplate": 1, "toc": 2}
        assert e.outputs == ["pg2/script.v1", "pg2/ch001.wav"]
        assert parsed.entries["pg1"].error == "boom newline here"

    def test_entries_sorted_in_serialized_form(self):
        text = P.serialize_manifest(self._manifest())
        books_section = text.split("[books]\n", 1)[1]
        ids = [line.split("\t", 1)[0] for line in books_section.splitlines() if line]
        assert ids == sorted(ids)

    def test_comparable_text_excludes_timestamps(self):
        m = self._manifest()
        before = m.comparable_text()
        m.started, m.finished = "X1", "X2"
        assert m.comparable_text() == before
        assert "T1" not in before

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        path = tmp_path / "manifest.v1"
        P.write_manifest(self._manifest(), path)
        P.write_manifest(self._manifest(), path)
        assert [p.name for p in tmp_path.iterdir()] == ["manifest.v1"]
        assert P.load_manifest(path).fingerprint == "abc123"


class TestCollectionStats:
    def test_empty(self):
        assert P.collection_stats(P.Manifest(fingerprint="x")) == {
            "books_done": 0, "total_hours": 0.0,
        }

    def test_hours_arithmetic(self):
        m = P.Manifest(fingerprint="x")
        for i in (1, 2):
            m.entries[f"pg{i}"] = P.BookEntry(
                book_id=f"pg{i}", status="done", audio_ms=1_800_000
            )
        stats = P.collection_stats(m)
        assert stats == {"books_done": 2, "total_hours": 1.0}

    def test_failed_books_not_counted(self):
        m = P.Manifest(fingerprint="x")
        m.entries["a"] = P.BookEntry(book_id="a", status="failed", audio_ms=999)
        assert P.collection_stats(m)["books_done"] == 0

    def test_production_scale_formula(self):
        # a 5,000-book collection averaging 7 h/book reports 35,000 hours;
        # only the arithmetic is pinned here, not the corpus
        m = P.Manifest(fingerprint="x")
        for i in range(5000):
            m.entries[f"b{i:04d}"] = P.BookEntry(
                book_id=f"b{i:04d}", status="done", audio_ms=25_200_000
            )
        stats = P.collection_stats(m)
        assert stats["books_done"] == 5000
        assert stats["total_hours"] == 35000.0


class TestRunPipeline:
    def test_full_fixture_run(self, built_output):
        config, manifest = built_output
        statuses = {b: e.status for b, e in manifest.entries.items()}
        assert statuses.pop("pg999") == "failed"
        assert set(statuses.values()) == {"done"}
        assert "EmptyBook" in manifest.entries["pg999"].error

        out = Path(config.output_root)
        assert (out / P.MANIFEST_NAME).exists()
        assert (out / P.FEATURES_NAME).exists()
        assert (out / P.MODEL_NAME).exists()
        for book_id, entry in manifest.entries.items():
            for rel in entry.outputs:
                assert (out / rel).exists(), rel
            if entry.status == "done":
                assert entry.chapter_count >= 2
                assert entry.audio_ms > 0
                assert (out / book_id / "script.v1").exists()
                assert (out / book_id / "ch001.wav").exists()
                assert (out / book_id / "ch001.ssml").exists()

    def test_empty_corpus(self, tmp_path):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        with pytest.raises(CorpusEmpty):
            P.run_pipeline(make_config(corpus, tmp_path / "out"))

    def test_k_larger_than_corpus_is_config_error(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            P.run_pipeline(make_config(CORPUS, tmp_path / "out", k=50))

    def test_unmapped_cluster_excluded(self, built_output, tmp_path):
        config, manifest = built_output
        target = manifest.entries["pg301"]
        assert target.cluster_id is not None
        keep = {c: "std-v1" for c in range(3) if c != target.cluster_id}
        out = tmp_path / "out"
        manifest2 = P.run_pipeline(make_config(CORPUS, out, keep_list=keep))
        entry = manifest2.entries["pg301"]
        assert entry.status == "excluded"
        assert entry.audio_ms is None
        assert not any("wav" in o for o in entry.outputs)
        assert not (out / "pg301" / "ch001.wav").exists()

    def test_stage_prefix_run(self, tmp_path):
        out = tmp_path / "out"
        manifest = P.run_pipeline(
            make_config(CORPUS, out, stages=("features", "cluster"))
        )
        assert (out / P.MODEL_NAME).exists()
        assert not (out / "pg101" / "script.v1").exists()
        assert all(e.cluster_id is not None for e in manifest.entries.values())

    def test_serial_parallel_equivalence(self, built_output, tmp_path):
        config, _ = built_output
        out8 = tmp_path / "out8"
        P.run_pipeline(make_config(CORPUS, out8, worker_count=8))
        serial = P.load_manifest(Path(config.output_root) / P.MANIFEST_NAME)
        parallel = P.load_manifest(out8 / P.MANIFEST_NAME)
        assert serial.comparable_text() == parallel.comparable_text()
        for book_id, entry in serial.entries.items():
            for rel in entry.outputs:
                a = (Path(config.output_root) / rel).read_bytes()
                b = (out8 / rel).read_bytes()
                assert a == b, rel


class TestResume:
    def test_resume_after_success_is_noop(self, built_output, tmp_path):
        config = copy_built(built_output, tmp_path / "copy")
        out = Path(config.output_root)
        reference = P.load_manifest(out / P.MANIFEST_NAME)
        # done books are skipped outright; the failed book re-runs (that is
        # the contract) but must reproduce identical bytes
        done_mtimes = {
            rel: (out / rel).stat().st_mtime_ns
            for e in reference.entries.values() if e.status == "done"
            for rel in e.outputs
        }
        all_bytes = {
            rel: (out / rel).read_bytes()
            for e in reference.entries.values()
            for rel in e.outputs
        }
        P.resume(config)
        after = P.load_manifest(out / P.MANIFEST_NAME).comparable_text()
        assert reference.comparable_text() == after
        for rel, mtime in done_mtimes.items():
            assert (out / rel).stat().st_mtime_ns == mtime, rel
        for rel, payload in all_bytes.items():
            assert (out / rel).read_bytes() == payload, rel

    def test_resume_rebuilds_exactly_one_book(self, built_output, tmp_path):
        config = copy_built(built_output, tmp_path / "copy")
        out = Path(config.output_root)
        victim = out / "pg103" / "ch002.wav"
        reference = P.load_manifest(out / P.MANIFEST_NAME)
        untouched = {
            rel: (out / rel).stat().st_mtime_ns
            for b, e in reference.entries.items()
            if b != "pg103" and e.status == "done"
            for rel in e.outputs
        }
        victim.unlink()
        manifest = P.resume(config)
        assert victim.exists()
        for rel, mtime in untouched.items():
            assert (out / rel).stat().st_mtime_ns == mtime, rel
        assert manifest.comparable_text() == reference.comparable_text()

    def test_resume_entrywise_equals_fresh_run(self, built_output, tmp_path):
        config = copy_built(built_output, tmp_path / "copy")
        out = Path(config.output_root)
        (out / "pg105" / "ch001.wav").unlink()
        resumed = P.resume(config)
        fresh = P.load_manifest(Path(built_output[0].output_root) / P.MANIFEST_NAME)
        assert resumed.comparable_text() == fresh.comparable_text()
        for rel in fresh.entries["pg105"].outputs:
            a = (Path(built_output[0].output_root) / rel).read_bytes()
            assert (out / rel).read_bytes() == a, rel

    def test_fingerprint_mismatch(self, built_output, tmp_path):
        config = copy_built(built_output, tmp_path / "copy")
        config.k = 2
        with pytest.raises(FingerprintMismatch):
            P.resume(config)

    def test_failed_book_rerun_on_resume(self, built_output, tmp_path):
        config = copy_built(built_output, tmp_path / "copy")
        manifest = P.resume(config)
        assert manifest.entries["pg999"].status == "failed"  # deterministic refailure
