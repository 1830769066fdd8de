"""Per-book feature vectors: TF-IDF over DOM tokens + structural stats.

TF-IDF variant: tf(t) = count(t)/len(tokens), idf(t) = ln(N/(1+df)) + 1,
then L2 normalization of the nonzero vector.  The hand-crafted block is
z-scored against corpus statistics (population stddev; a zero-stddev
feature maps to 0) and concatenated after the TF-IDF block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import dom
from .errors import DimensionMismatch, EmptyCorpus

HANDCRAFTED_NAMES = (
    "table_count",
    "img_count",
    "internal_anchor_count",
    "max_depth",
    "p_text_fraction",
    "mean_p_length",
    "toc_marker",
    "element_count",
)

DEFAULT_MIN_DF = 2
DEFAULT_MAX_TERMS = 2000


@dataclass
class Vocabulary:
    terms: list[str]
    doc_freq: dict[str, int]
    corpus_size: int

    def __post_init__(self) -> None:
        self.index = {t: i for i, t in enumerate(self.terms)}


@dataclass
class FeatureVector:
    book_id: str
    tfidf: dict[int, float]
    handcrafted: list[float]
    combined: list[float]


def build_vocabulary(
    token_lists: Iterable[Sequence[str]],
    min_df: int = DEFAULT_MIN_DF,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> Vocabulary:
    """Document-frequency filtered, lexicographically sorted vocabulary."""
    df: dict[str, int] = {}
    n_docs = 0
    for tokens in token_lists:
        n_docs += 1
        for term in set(tokens):
            df[term] = df.get(term, 0) + 1
    if n_docs == 0:
        raise EmptyCorpus("no documents to build a vocabulary from")
    kept = [t for t, c in df.items() if c >= min_df]
    if len(kept) > max_terms:
        kept.sort(key=lambda t: (-df[t], t))
        kept = kept[:max_terms]
    kept.sort()
    return Vocabulary(terms=kept, doc_freq={t: df[t] for t in kept}, corpus_size=n_docs)


def tfidf(tokens: Sequence[str], vocab: Vocabulary) -> dict[int, float]:
    """Sparse L2-normalized TF-IDF weights; out-of-vocabulary tokens ignored."""
    if not tokens:
        return {}
    counts: dict[int, int] = {}
    for term in tokens:
        idx = vocab.index.get(term)
        if idx is not None:
            counts[idx] = counts.get(idx, 0) + 1
    if not counts:
        return {}
    total = len(tokens)
    weights = {
        idx: (c / total) * (math.log(vocab.corpus_size / (1 + vocab.doc_freq[vocab.terms[idx]])) + 1.0)
        for idx, c in counts.items()
    }
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm == 0.0:
        return {idx: 0.0 for idx in weights}
    return {idx: w / norm for idx, w in weights.items()}


def handcrafted_features(tree: dom.DomTree) -> list[float]:
    """The eight structural statistics, in HANDCRAFTED_NAMES order."""
    table_count = 0
    img_count = 0
    anchor_count = 0
    max_depth = 0
    element_count = 0
    p_chars = 0
    p_count = 0
    toc = 0.0

    stack: list[tuple[dom.DomNode, int]] = [(tree.root, 0)]
    while stack:
        node, depth = stack.pop()
        if node.kind == "element" and node is not tree.root:
            element_count += 1
            max_depth = max(max_depth, depth)
            if node.tag == "table":
                table_count += 1
            elif node.tag == "img":
                img_count += 1
            elif node.tag == "a" and node.attrs.get("href", "").startswith("#"):
                anchor_count += 1
            elif node.tag == "p":
                p_count += 1
                p_chars += len(dom.text_content(node))
            if "toc" in node.class_tokens():
                toc = 1.0
            elif node.tag in ("h1", "h2", "h3") and dom.text_content(node).lower() == "contents":
                toc = 1.0
        for child in node.children:
            if child.kind == "element":
                stack.append((child, depth + 1))

    total_chars = len(dom.text_content(tree.root))
    return [
        float(table_count),
        float(img_count),
        float(anchor_count),
        float(max_depth),
        (p_chars / total_chars) if total_chars else 0.0,
        (p_chars / p_count) if p_count else 0.0,
        toc,
        float(element_count),
    ]


def corpus_stats(handcrafted_rows: Sequence[Sequence[float]]) -> tuple[list[float], list[float]]:
    """Per-feature mean and population stddev over all books in the run."""
    if not handcrafted_rows:
        raise EmptyCorpus("no handcrafted rows")
    n = len(handcrafted_rows)
    width = len(handcrafted_rows[0])
    means = [sum(row[i] for row in handcrafted_rows) / n for i in range(width)]
    stds = [
        math.sqrt(sum((row[i] - means[i]) ** 2 for row in handcrafted_rows) / n)
        for i in range(width)
    ]
    return means, stds


def assemble_features(
    book_id: str,
    tfidf_map: dict[int, float],
    handcrafted: Sequence[float],
    stats: tuple[Sequence[float], Sequence[float]],
    vocab_size: int,
) -> FeatureVector:
    """Dense combined vector: TF-IDF block then z-scored handcrafted block."""
    if len(handcrafted) != len(HANDCRAFTED_NAMES):
        raise DimensionMismatch(
            f"expected {len(HANDCRAFTED_NAMES)} handcrafted features, got {len(handcrafted)}"
        )
    means, stds = stats
    dense = [0.0] * vocab_size
    for idx, w in tfidf_map.items():
        dense[idx] = w
    zscored = [
        (v - m) / s if s > 0.0 else 0.0
        for v, m, s in zip(handcrafted, means, stds)
    ]
    return FeatureVector(
        book_id=book_id,
        tfidf=dict(tfidf_map),
        handcrafted=list(handcrafted),
        combined=dense + zscored,
    )


def featurize_book(tree: dom.DomTree) -> tuple[list[str], list[float]]:
    """Tokens plus handcrafted stats for one parsed book."""
    return dom.dom_path_tokens(tree), handcrafted_features(tree)


# --- matrix file ----------------------------------------------------------
# One record per line: book_id, then the combined vector as decimal text,
# tab separated, rows sorted by book_id.

def write_matrix(features: Iterable[FeatureVector], path: Path | str) -> None:
    rows = sorted(features, key=lambda f: f.book_id)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for fv in rows:
            fh.write(fv.book_id)
            for value in fv.combined:
                fh.write("\t" + repr(value))
            fh.write("\n")


def read_matrix(path: Path | str) -> tuple[list[str], list[list[float]]]:
    book_ids: list[str] = []
    vectors: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            book_ids.append(parts[0])
            vectors.append([float(v) for v in parts[1:]])
    return book_ids, vectors
