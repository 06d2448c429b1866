"""Per-class descriptor words via chi-square and ANOVA F scoring.

Chi-square works on document-level token presence (2x2 one-vs-rest tables);
ANOVA compares per-document raw occurrence counts between the in-class and
out-of-class groups, so the two tests are genuinely different signals.
Multi-label corpora use one-vs-rest membership: a document is "in class" for
each of its labels.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .corpus import Document, LabelSpace, Vocabulary, encode
from .errors import DataError

TESTS = ("chi2", "anova")

_HEADER_RE = re.compile(r"^#test=(chi2|anova) n=(\d+)$")


@dataclass
class TokenClassStats:
    """Sparse document-level occurrence data for scoring tokens against classes.

    ``postings[token]`` lists (document index, raw count) for every document
    containing the token; together with ``doc_labels`` this determines both
    the 2x2 presence tables and the per-document ANOVA count groups.
    """

    n_docs: int
    class_sizes: list[int]
    doc_labels: list[frozenset[int]]
    postings: dict[str, list[tuple[int, int]]]
    doc_frequency: dict[str, int]

    def contingency(self, token: str, class_idx: int) -> tuple[int, int, int, int]:
        """One-vs-rest 2x2 table (a, b, c, d) of document-level presence."""
        entries = self._entries(token)
        a = sum(1 for doc_idx, _ in entries if class_idx in self.doc_labels[doc_idx])
        b = len(entries) - a
        c = self.class_sizes[class_idx] - a
        d = self.n_docs - self.class_sizes[class_idx] - b
        return a, b, c, d

    def anova_groups(self, token: str, class_idx: int) -> tuple[np.ndarray, np.ndarray]:
        """Dense per-document count vectors (in-class, out-of-class)."""
        entries = self._entries(token)
        in_counts = np.zeros(self.class_sizes[class_idx], dtype=np.float64)
        out_counts = np.zeros(self.n_docs - self.class_sizes[class_idx], dtype=np.float64)
        in_pos = out_pos = 0
        by_doc = dict(entries)
        for doc_idx, labels in enumerate(self.doc_labels):
            count = by_doc.get(doc_idx, 0)
            if class_idx in labels:
                in_counts[in_pos] = count
                in_pos += 1
            else:
                out_counts[out_pos] = count
                out_pos += 1
        return in_counts, out_counts

    def moments(self, token: str, class_idx: int) -> tuple[int, float, float, int, float, float]:
        """(n, sum, sum-of-squares) for the in-class and out-of-class groups."""
        s_in = q_in = 0.0
        s_all = q_all = 0.0
        for doc_idx, count in self._entries(token):
            sq = float(count) * float(count)
            s_all += count
            q_all += sq
            if class_idx in self.doc_labels[doc_idx]:
                s_in += count
                q_in += sq
        n_in = self.class_sizes[class_idx]
        n_out = self.n_docs - n_in
        return n_in, s_in, q_in, n_out, s_all - s_in, q_all - q_in

    def _entries(self, token: str) -> list[tuple[int, int]]:
        if token not in self.postings:
            raise DataError(f"token {token!r} not present in statistics")
        return self.postings[token]


def build_contingency(corpus: list[Document], vocab: Vocabulary, labels: LabelSpace) -> TokenClassStats:
    """Collect presence tables and count groups over vocabulary tokens.

    Padding and out-of-vocabulary tokens are excluded; every class must have
    at least one document.
    """
    if not corpus:
        raise DataError("empty corpus")
    doc_labels = [frozenset(doc.labels) for doc in corpus]
    class_sizes = [0] * len(labels)
    for ls in doc_labels:
        for j in ls:
            class_sizes[j] += 1
    for j, size in enumerate(class_sizes):
        if size == 0:
            raise DataError(f"class {labels.names[j]!r} has no documents")

    postings: dict[str, list[tuple[int, int]]] = {}
    doc_frequency: dict[str, int] = {}
    for doc_idx, doc in enumerate(corpus):
        counts: dict[str, int] = {}
        for tok in doc.tokens:
            if tok in vocab:
                counts[tok] = counts.get(tok, 0) + 1
        for tok, count in counts.items():
            postings.setdefault(tok, []).append((doc_idx, count))
            doc_frequency[tok] = doc_frequency.get(tok, 0) + 1
    return TokenClassStats(len(corpus), class_sizes, doc_labels, postings, doc_frequency)


def _chi2_from_table(a: int, b: int, c: int, d: int) -> float:
    """Closed-form 2x2 chi-square; zero when any marginal vanishes."""
    n = a + b + c + d
    denom = (a + b) * (c + d) * (a + c) * (b + d)
    if denom == 0:
        return 0.0
    num = a * d - b * c
    return n * float(num) * float(num) / float(denom)


def _anova_f_from_moments(
    n_in: int, s_in: float, q_in: float, n_out: int, s_out: float, q_out: float
) -> float:
    n = n_in + n_out
    if n_in == 0 or n_out == 0:
        raise DataError("insufficient degrees of freedom: both groups must be non-empty")
    if n < 3:
        raise DataError(f"insufficient degrees of freedom: {n} total observations")
    mean_in = s_in / n_in
    mean_out = s_out / n_out
    # Two-group identity: SSB = n1*n2/N * (m1 - m2)^2, exact at zero when the
    # group means agree; the computational form q - s*m can go slightly
    # negative in floating point, hence the clamps.
    ss_between = (n_in * n_out / n) * (mean_in - mean_out) ** 2
    ss_within = max(q_in - s_in * mean_in, 0.0) + max(q_out - s_out * mean_out, 0.0)
    if ss_between == 0.0:
        return 0.0
    if ss_within == 0.0:
        return math.inf
    return ss_between / (ss_within / (n - 2))


def chi2_score(stats: TokenClassStats, token: str, class_idx: int) -> float:
    """Chi-square statistic of the token's one-vs-rest presence table."""
    return _chi2_from_table(*stats.contingency(token, class_idx))


def anova_f_score(in_class_counts, out_class_counts) -> float:
    """One-way two-group F = MS_between / MS_within over raw count groups.

    Returns +inf when within-group variance is zero but the means differ,
    and 0 when the means agree.
    """
    x = np.asarray(in_class_counts, dtype=np.float64)
    y = np.asarray(out_class_counts, dtype=np.float64)
    return _anova_f_from_moments(
        x.size, float(x.sum()), float((x * x).sum()), y.size, float(y.sum()), float((y * y).sum())
    )


@dataclass
class ClassDescriptorSet:
    """Ranked (token, score) descriptor lists, one per class."""

    test: str
    dimension: int
    class_names: tuple[str, ...]
    entries: list[list[tuple[str, float]]]
    union_vocabulary: frozenset[str]

    def tokens_for(self, class_name: str) -> list[str]:
        return [tok for tok, _ in self.entries[self.class_names.index(class_name)]]


def _make_descriptor_set(
    test: str, n: int, class_names: tuple[str, ...], entries: list[list[tuple[str, float]]]
) -> ClassDescriptorSet:
    union = frozenset(tok for class_entries in entries for tok, _ in class_entries)
    return ClassDescriptorSet(test, n, tuple(class_names), entries, union)


def extract_descriptors(
    corpus: list[Document],
    vocab: Vocabulary,
    labels: LabelSpace,
    test: str,
    n: int,
    min_doc_frequency: int = 2,
) -> ClassDescriptorSet:
    """Top-n tokens per class under the chosen test.

    Ties break by higher document frequency, then lexicographic token order.
    Tokens below ``min_doc_frequency`` are not candidates (a hapax cannot
    yield a stable statistic).
    """
    if test not in TESTS:
        raise DataError(f"unknown test {test!r}, expected one of {TESTS}")
    if n < 1:
        raise DataError(f"descriptor dimension must be >= 1, got {n}")
    stats = build_contingency(corpus, vocab, labels)
    candidates = sorted(t for t, df in stats.doc_frequency.items() if df >= min_doc_frequency)

    entries: list[list[tuple[str, float]]] = []
    for class_idx in range(len(labels)):
        scored = []
        for tok in candidates:
            if test == "chi2":
                score = chi2_score(stats, tok, class_idx)
            else:
                score = _anova_f_from_moments(*stats.moments(tok, class_idx))
            scored.append((tok, score))
        scored.sort(key=lambda ts: (-ts[1], -stats.doc_frequency[ts[0]], ts[0]))
        entries.append(scored[:n])
    return _make_descriptor_set(test, n, labels.names, entries)


def build_descriptor_channel_input(
    tokens: list[str], descriptors: ClassDescriptorSet, vocab: Vocabulary, max_len: int
) -> np.ndarray:
    """Keep only descriptor-vocabulary tokens (order and duplicates kept), encode."""
    kept = [tok for tok in tokens if tok in descriptors.union_vocabulary]
    return encode(kept, vocab, max_len)


def save_descriptors(descriptors: ClassDescriptorSet, path) -> None:
    """One header line, then class<TAB>token<TAB>score rows in rank order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#test={descriptors.test} n={descriptors.dimension}\n")
        for name, class_entries in zip(descriptors.class_names, descriptors.entries):
            for tok, score in class_entries:
                fh.write(f"{name}\t{tok}\t{format(score, '.17g')}\n")


def load_descriptors(path) -> ClassDescriptorSet:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        match = _HEADER_RE.match(header)
        if not match:
            raise DataError(f"{path}: line 1: expected '#test=<chi2|anova> n=<int>' header")
        test, n = match.group(1), int(match.group(2))
        class_names: list[str] = []
        entries: list[list[tuple[str, float]]] = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}: line {lineno}: expected class<TAB>token<TAB>score")
            name, tok, score_str = parts
            try:
                score = float(score_str)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: bad score {score_str!r}")
            if not class_names or class_names[-1] != name:
                if name in class_names:
                    raise DataError(f"{path}: line {lineno}: class {name!r} rows are not contiguous")
                class_names.append(name)
                entries.append([])
            entries[-1].append((tok, score))
    if not class_names:
        raise DataError(f"{path}: no descriptor entries")
    return _make_descriptor_set(test, n, tuple(class_names), entries)
