import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from descnet.corpus import Document, LabelSpace, build_vocabulary, encode, preprocess_text
from descnet.descriptors import (
    ClassDescriptorSet,
    anova_f_score,
    build_contingency,
    build_descriptor_channel_input,
    chi2_score,
    extract_descriptors,
    load_descriptors,
    save_descriptors,
)
from descnet.errors import DataError
from descnet.verify import anova_oracle, chi2_oracle, random_corpus


def make_docs(texts_and_labels, label_space):
    return [
        Document(i, text, preprocess_text(text), frozenset(labels))
        for i, (text, labels) in enumerate(texts_and_labels)
    ]


@pytest.fixture
def cat_dog():
    labels = LabelSpace(("A", "B"), "multi_class")
    docs = make_docs(
        [("cat cat", [0]), ("cat", [0]), ("dog", [1]), ("dog dog", [1])], labels
    )
    vocab = build_vocabulary(docs, max_size=10)
    return docs, vocab, labels


class TestContingency:
    def test_hand_count(self, cat_dog):
        docs, vocab, labels = cat_dog
        stats = build_contingency(docs, vocab, labels)
        assert stats.contingency("cat", 0) == (2, 0, 0, 2)
        assert stats.contingency("cat", 1) == (0, 2, 2, 0)

    def test_saturated_token(self):
        labels = LabelSpace(("A", "B"), "multi_class")
        docs = make_docs([("the cat", [0]), ("the dog", [1]), ("the fox", [1])], labels)
        vocab = build_vocabulary(docs, max_size=10)
        stats = build_contingency(docs, vocab, labels)
        assert stats.contingency("the", 0) == (1, 2, 0, 0)

    def test_multi_label_one_vs_rest(self):
        labels = LabelSpace(("toxic", "insult", "threat"), "multi_label")
        docs = make_docs(
            [("bad words", [0, 1]), ("stop now", [2]), ("worse words", [0])], labels
        )
        vocab = build_vocabulary(docs, max_size=10)
        stats = build_contingency(docs, vocab, labels)
        # "bad" occurs only in doc 0, which is in-class for both toxic and insult
        assert stats.contingency("bad", 0) == (1, 0, 1, 1)
        assert stats.contingency("bad", 1) == (1, 0, 0, 2)
        assert stats.contingency("words", 2) == (0, 2, 1, 0)

    def test_zero_document_class_named(self):
        labels = LabelSpace(("A", "B", "Empty"), "multi_class")
        docs = make_docs([("x", [0]), ("y", [1])], labels)
        vocab = build_vocabulary(docs, max_size=10)
        with pytest.raises(DataError, match="Empty"):
            build_contingency(docs, vocab, labels)

    def test_anova_groups_partition_corpus(self, cat_dog):
        docs, vocab, labels = cat_dog
        stats = build_contingency(docs, vocab, labels)
        in_counts, out_counts = stats.anova_groups("cat", 0)
        assert sorted(in_counts) == [1, 2]
        assert sorted(out_counts) == [0, 0]
        assert in_counts.size + out_counts.size == len(docs)


class TestChi2:
    def test_worked_example(self, cat_dog):
        docs, vocab, labels = cat_dog
        stats = build_contingency(docs, vocab, labels)
        assert chi2_score(stats, "cat", 0) == pytest.approx(4.0, abs=1e-12)

    def test_independence_is_zero(self):
        from descnet.descriptors import _chi2_from_table

        assert _chi2_from_table(1, 1, 1, 1) == 0.0

    def test_three_one_one_three(self):
        from descnet.descriptors import _chi2_from_table

        # N*(ad-bc)^2 / product of marginals = 8*64/256
        assert _chi2_from_table(3, 1, 1, 3) == pytest.approx(2.0, abs=1e-12)

    def test_zero_marginal_returns_zero(self):
        from descnet.descriptors import _chi2_from_table

        assert _chi2_from_table(2, 2, 0, 0) == 0.0
        assert _chi2_from_table(0, 0, 2, 2) == 0.0

    @given(st.tuples(*[st.integers(min_value=0, max_value=20)] * 4))
    def test_non_negative_and_zero_iff_ad_equals_bc(self, table):
        from descnet.descriptors import _chi2_from_table

        a, b, c, d = table
        score = _chi2_from_table(a, b, c, d)
        assert score >= 0.0
        marginals = (a + b) * (c + d) * (a + c) * (b + d)
        if marginals > 0:
            assert (score == 0.0) == (a * d == b * c)

    @given(st.tuples(*[st.integers(min_value=0, max_value=20)] * 4))
    def test_symmetric_under_class_complement_swap(self, table):
        from descnet.descriptors import _chi2_from_table

        a, b, c, d = table
        assert _chi2_from_table(a, b, c, d) == _chi2_from_table(b, a, d, c)


class TestAnovaF:
    def test_worked_example(self):
        assert anova_f_score([2, 1], [0, 0]) == pytest.approx(9.0, abs=1e-12)

    def test_equal_values_zero(self):
        assert anova_f_score([1, 1], [1, 1]) == 0.0

    def test_zero_within_variance_sentinel(self):
        assert anova_f_score([2, 2], [0, 0]) == math.inf

    def test_insufficient_observations(self):
        with pytest.raises(DataError, match="insufficient degrees of freedom"):
            anova_f_score([1], [2])

    def test_empty_group_rejected(self):
        with pytest.raises(DataError):
            anova_f_score([], [1, 2, 3])

    @settings(max_examples=100)
    @given(
        st.lists(st.integers(min_value=0, max_value=9), min_size=1, max_size=8),
        st.lists(st.integers(min_value=0, max_value=9), min_size=2, max_size=8),
    )
    def test_permutation_invariance(self, group_a, group_b):
        rng = np.random.default_rng(0)
        baseline = anova_f_score(group_a, group_b)
        shuffled = anova_f_score(rng.permutation(group_a), rng.permutation(group_b))
        assert baseline == shuffled


class TestBruteForceEquivalence:
    def test_random_corpora_match_oracles(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            docs, vocab, labels = random_corpus(rng)
            stats = build_contingency(docs, vocab, labels)
            for token in stats.postings:
                for class_idx in range(len(labels)):
                    table = stats.contingency(token, class_idx)
                    expected_chi2 = chi2_oracle(*table)
                    got_chi2 = chi2_score(stats, token, class_idx)
                    assert got_chi2 == pytest.approx(expected_chi2, rel=1e-9, abs=1e-15)
                    groups = stats.anova_groups(token, class_idx)
                    if groups[0].size + groups[1].size < 3:
                        continue
                    expected_f = anova_oracle(*groups)
                    got_f = anova_f_score(*groups)
                    if math.isinf(expected_f):
                        assert math.isinf(got_f)
                    else:
                        assert got_f == pytest.approx(expected_f, rel=1e-9, abs=1e-15)


class TestExtractDescriptors:
    def marker_setup(self):
        labels = LabelSpace(("A", "B", "C"), "multi_class")
        rows = []
        noise = [f"noise{i}" for i in range(6)]
        rng = np.random.default_rng(5)
        for i in range(12):
            j = i % 3
            marker = ["alpha", "beta", "gamma"][j]
            words = [marker] + [noise[k] for k in rng.integers(0, 6, size=4)]
            rows.append((" ".join(words), [j]))
        docs = make_docs(rows, labels)
        vocab = build_vocabulary(docs, max_size=50)
        return docs, vocab, labels

    def test_marker_ranks_first_under_both_tests(self):
        docs, vocab, labels = self.marker_setup()
        for test in ("chi2", "anova"):
            dset = extract_descriptors(docs, vocab, labels, test, n=1)
            assert [e[0][0] for e in dset.entries] == ["alpha", "beta", "gamma"]

    def test_marker_is_brute_force_argmax(self):
        docs, vocab, labels = self.marker_setup()
        stats = build_contingency(docs, vocab, labels)
        for class_idx, marker in enumerate(["alpha", "beta", "gamma"]):
            chi2_by_token = {
                tok: chi2_oracle(*stats.contingency(tok, class_idx)) for tok in stats.postings
            }
            assert max(chi2_by_token, key=chi2_by_token.get) == marker
            f_by_token = {
                tok: anova_oracle(*stats.anova_groups(tok, class_idx)) for tok in stats.postings
            }
            best = max(f_by_token.values())
            assert f_by_token[marker] == best
            assert sum(1 for v in f_by_token.values() if v == best) == 1

    def test_n_larger_than_vocabulary_keeps_all_candidates(self):
        docs, vocab, labels = self.marker_setup()
        dset = extract_descriptors(docs, vocab, labels, "chi2", n=10_000)
        stats = build_contingency(docs, vocab, labels)
        n_candidates = sum(1 for df in stats.doc_frequency.values() if df >= 2)
        for class_entries in dset.entries:
            assert len(class_entries) == n_candidates

    def test_scores_non_increasing_and_df_positive(self):
        docs, vocab, labels = self.marker_setup()
        for test in ("chi2", "anova"):
            dset = extract_descriptors(docs, vocab, labels, test, n=5)
            for class_entries in dset.entries:
                scores = [s for _, s in class_entries]
                assert scores == sorted(scores, reverse=True)
                for tok, _ in class_entries:
                    assert vocab.doc_frequency[tok] >= 1

    def test_min_doc_frequency_excludes_hapax(self):
        labels = LabelSpace(("A", "B"), "multi_class")
        docs = make_docs(
            [("rare common", [0]), ("common word", [0]), ("word common", [1]), ("word other other2", [1])],
            labels,
        )
        vocab = build_vocabulary(docs, max_size=50)
        dset = extract_descriptors(docs, vocab, labels, "chi2", n=50)
        assert "rare" not in dset.union_vocabulary
        dset_all = extract_descriptors(docs, vocab, labels, "chi2", n=50, min_doc_frequency=1)
        assert "rare" in dset_all.union_vocabulary

    def test_tie_break_doc_frequency_then_lexicographic(self):
        labels = LabelSpace(("A", "B"), "multi_class")
        # "zz" and "aa" are class-neutral with equal tables -> equal chi2 of 0;
        # "mm" also ties on score but has higher doc frequency.
        docs = make_docs(
            [
                ("zz aa mm x", [0]),
                ("zz aa mm y", [1]),
                ("mm x", [0]),
                ("mm y", [1]),
            ],
            labels,
        )
        vocab = build_vocabulary(docs, max_size=50)
        dset = extract_descriptors(docs, vocab, labels, "chi2", n=5)
        tokens_a = [tok for tok, _ in dset.entries[0]]
        # x and y tie at the top score (lexicographic), then the zero-scored
        # tail ranks by doc frequency (mm: 4) before lexicographic (aa, zz)
        assert tokens_a == ["x", "y", "mm", "aa", "zz"]

    def test_union_vocabulary_is_union_of_lists(self):
        docs, vocab, labels = self.marker_setup()
        dset = extract_descriptors(docs, vocab, labels, "anova", n=3)
        assert dset.union_vocabulary == frozenset(t for e in dset.entries for t, _ in e)


class TestDescriptorChannelInput:
    def make_set(self, union, vocab):
        entries = [[(tok, 1.0) for tok in sorted(union)]]
        return ClassDescriptorSet("chi2", len(union), ("A",), entries, frozenset(union))

    def test_filter_then_encode(self):
        labels = LabelSpace(("A",), "multi_class")
        docs = make_docs([("the iraq game of iraq", [0])], labels)
        vocab = build_vocabulary(docs, max_size=20)
        dset = self.make_set({"iraq", "game"}, vocab)
        ids = build_descriptor_channel_input(["the", "iraq", "game", "of"], dset, vocab, 6)
        assert ids.tolist() == [vocab.token_to_id["iraq"], vocab.token_to_id["game"], 0, 0, 0, 0]

    def test_no_surviving_tokens_all_padding(self):
        labels = LabelSpace(("A",), "multi_class")
        docs = make_docs([("alpha beta", [0])], labels)
        vocab = build_vocabulary(docs, max_size=20)
        dset = self.make_set({"other"}, vocab)
        assert build_descriptor_channel_input(["alpha", "beta"], dset, vocab, 4).tolist() == [0, 0, 0, 0]

    def test_identity_filter_matches_text_encoding(self):
        labels = LabelSpace(("A",), "multi_class")
        docs = make_docs([("a b c a", [0])], labels)
        vocab = build_vocabulary(docs, max_size=20)
        tokens = ["a", "b", "c", "a"]
        dset = self.make_set(set(tokens), vocab)
        got = build_descriptor_channel_input(tokens, dset, vocab, 5)
        assert got.tolist() == encode(tokens, vocab, 5).tolist()

    @settings(max_examples=60)
    @given(st.lists(st.sampled_from("abcdef"), max_size=15), st.sets(st.sampled_from("abcdef")))
    def test_output_is_subsequence_of_text_channel(self, tokens, union):
        labels = LabelSpace(("A",), "multi_class")
        docs = make_docs([("a b c d e f", [0])], labels)
        vocab = build_vocabulary(docs, max_size=20)
        dset = self.make_set(union, vocab) if union else ClassDescriptorSet("chi2", 1, ("A",), [[]], frozenset())
        out = build_descriptor_channel_input(tokens, dset, vocab, 20)
        text_ids = [vocab.id_of(t) for t in tokens]
        filtered = [i for i in out.tolist() if i != 0]
        it = iter(text_ids)
        assert all(any(x == want for x in it) for want in filtered)


class TestSerialization:
    def random_set(self, seed=0):
        rng = np.random.default_rng(seed)
        names = ("World", "Sports")
        entries = []
        for j in range(2):
            rows = [(f"tok{j}{i}", float(rng.gamma(2.0))) for i in range(5)]
            rows.sort(key=lambda r: -r[1])
            entries.append(rows)
        entries[0][0] = (entries[0][0][0], math.inf)  # exercise the sentinel
        union = frozenset(t for e in entries for t, _ in e)
        return ClassDescriptorSet("anova", 5, names, entries, union)

    def test_round_trip_structure(self, tmp_path):
        dset = self.random_set()
        path = tmp_path / "desc.tsv"
        save_descriptors(dset, path)
        loaded = load_descriptors(path)
        assert loaded.test == dset.test
        assert loaded.dimension == dset.dimension
        assert loaded.class_names == dset.class_names
        assert loaded.union_vocabulary == dset.union_vocabulary

    def test_scores_round_trip_bit_exact(self, tmp_path):
        dset = self.random_set(seed=42)
        path = tmp_path / "desc.tsv"
        save_descriptors(dset, path)
        loaded = load_descriptors(path)
        for original, reloaded in zip(dset.entries, loaded.entries):
            for (tok_a, score_a), (tok_b, score_b) in zip(original, reloaded):
                assert tok_a == tok_b
                assert score_a == score_b  # 17 significant digits round-trip

    def test_unknown_test_name_rejected(self, tmp_path):
        path = tmp_path / "desc.tsv"
        path.write_text("#test=ttest n=5\nA\tx\t1.0\n")
        with pytest.raises(DataError, match="line 1"):
            load_descriptors(path)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "desc.tsv"
        path.write_text("#test=chi2 n=5\nA\tx\t1.0\nbroken\n")
        with pytest.raises(DataError, match="line 3"):
            load_descriptors(path)
