import numpy as np
import pytest
import Stemmer
from hypothesis import given, settings
from hypothesis import strategies as st

from polya_lm.corpus import (
    CranfieldParseError,
    build_corpus,
    burstiness,
    load_stopwords,
    parse_cranfield,
    parse_qrels,
    preprocess,
    read_snapshot,
    stats_report,
    write_snapshot,
)

STOP = load_stopwords()


class TestParseCranfield:
    def test_single_record(self):
        assert parse_cranfield(b".I 1\n.W\nhello world\n") == [("1", "hello world")]

    def test_two_records(self):
        assert parse_cranfield(b".I 1\n.W\na\n.I 2\n.W\nb\n") == [("1", "a"), ("2", "b")]

    def test_empty(self):
        assert parse_cranfield(b"") == []

    def test_multiline_body_and_other_fields(self):
        raw = b".I 001\n.T\nsome title\n.A\nauthor\n.B\nj. ae.\n.W\nline one\nline two\n.X\n12 5 1\n"
        assert parse_cranfield(raw) == [("1", "line one\nline two")]
        assert parse_cranfield(raw, include_title=True) == [("1", "some title\nline one\nline two")]

    def test_w_before_i_reports_offset(self):
        with pytest.raises(CranfieldParseError) as err:
            parse_cranfield(b"\n.W\ntext\n")
        assert err.value.offset == 1
        assert "byte offset 1" in str(err.value)

    def test_record_without_body(self):
        assert parse_cranfield(".I 5\n.T\ntitle only\n") == [("5", "")]

    def test_crlf(self):
        assert parse_cranfield(b".I 1\r\n.W\r\nhello\r\n") == [("1", "hello")]


class TestQrels:
    def test_two_column(self):
        assert parse_qrels("1 10\n1 12\n2 3\n") == {"1": {"10", "12"}, "2": {"3"}}

    def test_trec_four_column(self):
        assert parse_qrels("1 0 10 1\n1 0 11 0\n") == {"1": {"10"}}

    def test_cranfield_three_column(self):
        assert parse_qrels("1 184 2\n1 29 -1\n") == {"1": {"184"}}

    def test_cisi_four_column(self):
        assert parse_qrels("     1     28 0 0.000000\n     1     35 0 0.000000\n") == {"1": {"28", "35"}}

    def test_bad_line(self):
        with pytest.raises(ValueError):
            parse_qrels("1 2 3 4 5\n")


class TestPreprocess:
    def test_example(self):
        assert preprocess("The DNA of cells", STOP) == ["dna", "cell"]

    def test_empty(self):
        assert preprocess("", STOP) == []

    def test_stemming(self):
        assert preprocess("running runs run", STOP) == ["run", "run", "run"]

    def test_numbers_and_punctuation(self):
        assert preprocess("x-ray 1960, p53's (data)", STOP) == ["rai", "p53", "data"]

    @pytest.mark.parametrize(
        "text",
        [
            "The DNA of cells",
            "running runs run",
            "Generalization of hopping ponies agreed with conditional relational caresses",
            "experimental investigation of the aerodynamics of a wing in a slipstream",
        ],
    )
    def test_matches_reference_porter(self, text):
        # independent Porter implementation (Snowball's port of the 1980 algorithm)
        ref = Stemmer.Stemmer("porter")
        words = [w for w in "".join(c if c.isalnum() else " " for c in text.lower()).split()]
        expected = ref.stemWords([w for w in words if not w.isdigit() and w not in STOP])
        assert preprocess(text, STOP) == expected

    def test_smart_list(self):
        assert len(STOP) == 570  # 571 lines, "would" listed twice
        assert {"the", "of", "also", "a"} <= STOP


class TestBuildCorpus:
    def test_counts(self):
        c = build_corpus([("1", ["a", "b", "a"])])
        assert c.vocab_size == 2
        assert c.cf.tolist() == [2, 1]
        assert c.df.tolist() == [1, 1]
        assert c.total_tokens == 3

    def test_df(self):
        c = build_corpus([("1", ["a"]), ("2", ["a"])])
        assert c.cf[c.term_index["a"]] == 2
        assert c.df[c.term_index["a"]] == 2

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            build_corpus([])

    def test_unique_term_count(self):
        c = build_corpus([("1", ["a", "b", "a", "c"])])
        assert c.documents[0].unique_term_count == 3

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=12), min_size=1, max_size=8))
    def test_invariants(self, docs):
        c = build_corpus([(str(i), d) for i, d in enumerate(docs)])
        assert c.cf.sum() == c.total_tokens
        assert np.all(c.df >= 1) and np.all(c.df <= c.cf) and np.all(c.cf <= max(c.total_tokens, 1))
        assert np.all(c.df <= c.n_docs)
        for doc, raw in zip(c.documents, docs):
            assert len(doc) == len(raw)
            assert doc.unique_term_count == len(set(raw))
            assert np.all(doc.tokens < c.vocab_size)
            assert np.bincount(doc.tokens, minlength=c.vocab_size).sum() == len(doc)
        again = build_corpus([(str(i), d) for i, d in enumerate(docs)])
        assert again.terms == c.terms
        assert np.array_equal(again.cf, c.cf) and np.array_equal(again.df, c.df)
        for t in range(c.vocab_size):
            assert burstiness(c, t) >= 1.0


def _corpus_with(cf, df, term="w"):
    # df documents; the first holds the surplus occurrences
    docs = [(str(i), [term]) for i in range(df)]
    docs[0] = ("0", [term] * (cf - df + 1))
    return build_corpus(docs)


class TestBurstiness:
    @pytest.mark.parametrize("cf,df,expected", [(216, 180, 1.2), (214, 47, 214 / 47), (51, 47, 51 / 47)])
    def test_values(self, cf, df, expected):
        c = _corpus_with(cf, df)
        assert c.cf[0] == cf and c.df[0] == df
        assert burstiness(c, 0) == pytest.approx(expected, rel=1e-15)
        assert burstiness(c, "w") == burstiness(c, 0)

    def test_unknown(self):
        c = _corpus_with(3, 2)
        with pytest.raises(KeyError):
            burstiness(c, 5)
        with pytest.raises(KeyError):
            burstiness(c, "nope")


def test_snapshot_roundtrip(tmp_path):
    c = build_corpus([("1", ["x", "y", "x"]), ("2", ["z"]), ("3", [])])
    write_snapshot(c, tmp_path / "a.txt", "abc")
    back, digest = read_snapshot(tmp_path / "a.txt")
    assert digest == "abc"
    assert back.terms == c.terms
    assert [d.doc_id for d in back.documents] == ["1", "2", "3"]
    assert all(np.array_equal(a.tokens, b.tokens) for a, b in zip(back.documents, c.documents))
    write_snapshot(back, tmp_path / "b.txt", "abc")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_stats_report():
    c = build_corpus([("1", ["a", "b"]), ("2", ["a"])])
    assert stats_report(c, "toy", 4) == "Collection\ttoy\n# docs\t2\n# vocab (v)\t2\n# tokens\t3\n# qrys\t4\n"
