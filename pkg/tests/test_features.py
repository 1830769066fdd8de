import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pagecast import features as F
from pagecast.dom import parse_html, serialize_html
from pagecast.errors import DimensionMismatch, EmptyCorpus


def brute_force_tfidf(tokens, vocab_terms, all_docs):
    """Independent oracle: recount everything straight from the formula.

    tf(t) = count(t)/len(tokens) over the full token list (out-of-vocabulary
    tokens count toward the denominator only); idf(t) = ln(N/(1+df(t))) + 1
    with df recounted from the raw documents; L2-normalize at the end.
    """
    n_docs = len(all_docs)
    weights = {}
    for term in set(tokens) & set(vocab_terms):
        df = sum(1 for doc in all_docs if term in set(doc))
        tf = tokens.count(term) / len(tokens)
        weights[term] = tf * (math.log(n_docs / (1 + df)) + 1.0)
    norm = math.sqrt(sum(w * w for w in weights.values()))
    return {t: w / norm for t, w in weights.items()} if norm else {}


class TestVocabulary:
    def test_single_doc(self):
        vocab = F.build_vocabulary([["a", "a", "b"]], min_df=1)
        assert vocab.terms == ["a", "b"]
        assert vocab.doc_freq == {"a": 1, "b": 1}
        assert vocab.corpus_size == 1

    def test_min_df_filter(self):
        vocab = F.build_vocabulary([["a"], ["a", "b"], ["b", "c"]], min_df=2)
        assert vocab.terms == ["a", "b"]

    def test_max_terms_tie_break(self):
        vocab = F.build_vocabulary([["a"], ["a", "b"], ["b", "c"]], min_df=2, max_terms=1)
        assert vocab.terms == ["a"]

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            F.build_vocabulary([], min_df=1)

    def test_order_invariance(self):
        docs = [["a", "b"], ["b", "c"], ["a"], ["c", "c", "d"]]
        v1 = F.build_vocabulary(docs, min_df=1)
        v2 = F.build_vocabulary(list(reversed(docs)), min_df=1)
        assert v1.terms == v2.terms
        assert v1.doc_freq == v2.doc_freq


class TestTfidf:
    def test_empty_tokens(self):
        vocab = F.build_vocabulary([["a"]], min_df=1)
        assert F.tfidf([], vocab) == {}

    def test_single_term_normalizes_to_one(self):
        vocab = F.build_vocabulary([["a"], ["a"]], min_df=1)
        weights = F.tfidf(["a"], vocab)
        assert weights == {0: pytest.approx(1.0, abs=1e-12)}

    def test_equal_weights_split_evenly(self):
        vocab = F.build_vocabulary([["a", "b"], ["c"]], min_df=1)
        weights = F.tfidf(["a", "b"], vocab)
        by_term = {vocab.terms[i]: w for i, w in weights.items()}
        assert by_term["a"] == pytest.approx(1 / math.sqrt(2), abs=1e-12)
        assert by_term["b"] == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_oov_ignored(self):
        vocab = F.build_vocabulary([["a"], ["a"]], min_df=1)
        weights = F.tfidf(["a", "zzz"], vocab)
        assert set(weights) == {0}

    def test_matches_oracle_on_fixture_corpus(self, corpus_books, corpus_features):
        vocab, _, vectors = corpus_features
        all_docs = [corpus_books[b][1] for b in sorted(corpus_books)]
        for book_id in sorted(corpus_books):
            tokens = corpus_books[book_id][1]
            expected = brute_force_tfidf(tokens, vocab.terms, all_docs)
            got = {vocab.terms[i]: w for i, w in vectors[book_id].tfidf.items()}
            assert set(got) == set(expected), book_id
            for term, w in expected.items():
                assert got[term] == pytest.approx(w, abs=1e-9), (book_id, term)

    def test_l2_norm_is_one(self, corpus_features):
        _, _, vectors = corpus_features
        for book_id, fv in vectors.items():
            if not fv.tfidf:
                continue
            norm = math.sqrt(sum(w * w for w in fv.tfidf.values()))
            assert abs(norm - 1.0) <= 1e-9, book_id


token_lists = st.lists(
    st.lists(st.sampled_from(["t:p", "t:div", "b:root/p", "c:p.x", "t:li"]),
             min_size=0, max_size=20),
    min_size=1, max_size=6,
)


@settings(max_examples=100, deadline=None)
@given(token_lists)
def test_tfidf_oracle_property(docs):
    vocab = F.build_vocabulary(docs, min_df=1)
    for tokens in docs:
        got = {vocab.terms[i]: w for i, w in F.tfidf(tokens, vocab).items()}
        expected = brute_force_tfidf(tokens, vocab.terms, docs)
        assert set(got) == set(expected)
        for term, w in expected.items():
            assert got[term] == pytest.approx(w, abs=1e-9)


class TestHandcrafted:
    def test_empty_tree_is_all_zero(self):
        assert F.handcrafted_features(parse_html("")) == [0.0] * 8

    def test_single_paragraph_document(self):
        feats = F.handcrafted_features(parse_html("<div><p>abcd</p></div>"))
        named = dict(zip(F.HANDCRAFTED_NAMES, feats))
        assert named["table_count"] == 0
        assert named["img_count"] == 0
        assert named["internal_anchor_count"] == 0
        assert named["max_depth"] == 2
        assert named["p_text_fraction"] == 1.0
        assert named["mean_p_length"] == 4
        assert named["toc_marker"] == 0.0
        assert named["element_count"] == 2

    def test_toc_and_anchor(self):
        feats = F.handcrafted_features(
            parse_html("<h2>Contents</h2><a href='#c1'>I</a>")
        )
        named = dict(zip(F.HANDCRAFTED_NAMES, feats))
        assert named["internal_anchor_count"] == 1
        assert named["toc_marker"] == 1.0

    def test_toc_via_class(self):
        feats = F.handcrafted_features(parse_html("<div class='toc'>x</div>"))
        assert dict(zip(F.HANDCRAFTED_NAMES, feats))["toc_marker"] == 1.0

    def test_counts(self):
        html = "<table><tr><td>x</td></tr></table><img src='a'><a href='#f'>1</a><a href='x'>2</a>"
        named = dict(zip(F.HANDCRAFTED_NAMES, F.handcrafted_features(parse_html(html))))
        assert named["table_count"] == 1
        assert named["img_count"] == 1
        assert named["internal_anchor_count"] == 1

    def test_reserialization_invariance(self, corpus_books):
        for book_id, (doc, _, handcrafted) in corpus_books.items():
            tree = parse_html(doc.raw_html)
            again = parse_html(serialize_html(tree))
            assert F.handcrafted_features(again) == handcrafted, book_id


class TestAssemble:
    def test_degenerate_corpus_zscores_zero(self):
        rows = [[2.0] * 8, [2.0] * 8]
        stats = F.corpus_stats(rows)
        fv = F.assemble_features("b", {}, rows[0], stats, vocab_size=0)
        assert fv.combined == [0.0] * 8

    def test_hand_zscore(self):
        rows = [[2.0] + [0.0] * 7, [4.0] + [0.0] * 7]
        means, stds = F.corpus_stats(rows)
        assert means[0] == 3.0
        assert stds[0] == 1.0  # population stddev
        fv_lo = F.assemble_features("lo", {}, rows[0], (means, stds), 0)
        fv_hi = F.assemble_features("hi", {}, rows[1], (means, stds), 0)
        assert fv_lo.combined[0] == -1.0
        assert fv_hi.combined[0] == 1.0

    def test_empty_vocab_gives_length_8(self):
        stats = F.corpus_stats([[1.0] * 8])
        fv = F.assemble_features("b", {}, [1.0] * 8, stats, vocab_size=0)
        assert len(fv.combined) == 8

    def test_dimension_mismatch(self):
        stats = F.corpus_stats([[1.0] * 8])
        with pytest.raises(DimensionMismatch):
            F.assemble_features("b", {}, [1.0] * 7, stats, vocab_size=0)


class TestMatrixFile:
    def test_round_trip(self, tmp_path, corpus_features):
        _, _, vectors = corpus_features
        path = tmp_path / "features.tsv"
        F.write_matrix(vectors.values(), path)
        ids, rows = F.read_matrix(path)
        assert ids == sorted(vectors)
        for book_id, row in zip(ids, rows):
            assert row == vectors[book_id].combined  # repr round-trips exactly
