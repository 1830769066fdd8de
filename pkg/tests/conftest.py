import shutil
from pathlib import Path

import pytest

from pagecast import features as features_mod
from pagecast import pipeline as pipeline_mod
from pagecast.dom import parse_html
from pagecast.ingest import load_ebook, scan_corpus

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = FIXTURES / "corpus"


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return CORPUS


@pytest.fixture(scope="session")
def corpus_refs():
    return scan_corpus(CORPUS)


@pytest.fixture(scope="session")
def corpus_books(corpus_refs):
    """book_id -> (doc, tokens, handcrafted); trees are not shared because
    normalization mutates them."""
    books = {}
    for ref in corpus_refs:
        doc = load_ebook(ref)
        tree = parse_html(doc.raw_html)
        tokens, handcrafted = features_mod.featurize_book(tree)
        books[ref.book_id] = (doc, tokens, handcrafted)
    return books


@pytest.fixture(scope="session")
def corpus_features(corpus_books):
    """(vocab, stats, {book_id: FeatureVector}) over the fixture corpus."""
    ids = sorted(corpus_books)
    vocab = features_mod.build_vocabulary(
        [corpus_books[b][1] for b in ids], min_df=2, max_terms=2000
    )
    stats = features_mod.corpus_stats([corpus_books[b][2] for b in ids])
    vectors = {
        b: features_mod.assemble_features(
            b, features_mod.tfidf(corpus_books[b][1], vocab),
            corpus_books[b][2], stats, len(vocab.terms),
        )
        for b in ids
    }
    return vocab, stats, vectors


def make_config(corpus: Path, out: Path, **overrides) -> pipeline_mod.PipelineConfig:
    defaults = dict(
        corpus_root=corpus,
        output_root=out,
        k=3,
        seed=7,
        keep_list={0: "std-v1", 1: "std-v1", 2: "std-v1"},
        worker_count=1,
    )
    defaults.update(overrides)
    return pipeline_mod.PipelineConfig(**defaults)


@pytest.fixture(scope="session")
def built_output(tmp_path_factory):
    """One full pipeline run over the fixture corpus, shared read-only."""
    out = tmp_path_factory.mktemp("built")
    config = make_config(CORPUS, out)
    manifest = pipeline_mod.run_pipeline(config)
    return config, manifest


def copy_built(built, dst: Path) -> pipeline_mod.PipelineConfig:
    """Clone the shared build for tests that mutate output files."""
    config, _ = built
    shutil.copytree(config.output_root, dst, dirs_exist_ok=True)
    return make_config(CORPUS, dst)


def load_annotated_dialogue(path: Path):
    """Parse a PARA/SEG annotated dialogue fixture."""
    paras = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] == "PARA":
            paras.append((fields[1], []))
        elif fields[0] == "SEG":
            kind, speaker, qo, qc, text = fields[1:6]
            paras[-1][1].append((kind, speaker, qo == "1", qc == "1", text))
    return paras
