from __future__ import annotations

import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abnormality.corpus import (
    Corpus,
    Example,
    JsonlFields,
    ingest_jsonl,
    ingest_squad,
    make_synthetic_corpus,
    write_subset,
)
from abnormality.errors import ParseError, SchemaError
from abnormality.sampler import Selection

from conftest import corpus_of


def everything_selected(n: int) -> Selection:
    return Selection(low=tuple(range(n)), high=(), mean_proximal=(), policy_echo={})


class TestIngestSquad:
    def test_empty_data(self):
        corpus = ingest_squad(b'{"data":[]}')
        assert len(corpus) == 0

    def test_one_paragraph_three_qas(self, squad_bytes):
        corpus = ingest_squad(squad_bytes)
        first_three = corpus.examples[:3]
        assert [ex.ordinal for ex in first_three] == [0, 1, 2]
        assert len({ex.context for ex in first_three}) == 1
        assert all(ex.title == "Alpha" for ex in first_three)

    def test_document_order(self, squad_bytes):
        corpus = ingest_squad(squad_bytes)
        assert [ex.id for ex in corpus] == ["a1", "a2", "a3", "b1", "b2"]
        assert [ex.title for ex in corpus] == ["Alpha"] * 3 + ["Beta"] * 2
        assert corpus[3].context == "b c"

    def test_qa_payload_carried(self, squad_bytes):
        corpus = ingest_squad(squad_bytes)
        assert corpus[0].payload["question"] == "what?"

    def test_char_length(self, squad_bytes):
        corpus = ingest_squad(squad_bytes)
        assert corpus[0].char_length == len("The brain, the brain.")

    def test_malformed_json_reports_byte_offset(self):
        # the bad token follows a two-byte character, shifting bytes past chars
        text = '{"k": "é", !}'
        with pytest.raises(ParseError) as exc:
            ingest_squad(text.encode("utf-8"))
        assert exc.value.offset == len(text[:11].encode("utf-8")) == 12

    def test_missing_title_names_path(self):
        doc = {"data": [{"paragraphs": []}]}
        with pytest.raises(SchemaError) as exc:
            ingest_squad(json.dumps(doc).encode())
        assert exc.value.path == "data[0].title"

    def test_missing_context_names_path(self):
        doc = {"data": [{"title": "T", "paragraphs": [{"qas": []}]}]}
        with pytest.raises(SchemaError) as exc:
            ingest_squad(json.dumps(doc).encode())
        assert "data[0].paragraphs[0].context" == exc.value.path

    def test_missing_qa_id_names_path(self):
        doc = {"data": [{"title": "T", "paragraphs": [{"context": "x", "qas": [{"id": "q"}, {}]}]}]}
        with pytest.raises(SchemaError) as exc:
            ingest_squad(json.dumps(doc).encode())
        assert exc.value.path == "data[0].paragraphs[0].qas[1].id"

    def test_missing_data_key(self):
        with pytest.raises(SchemaError):
            ingest_squad(b"{}")

    def test_deterministic(self, squad_bytes):
        assert ingest_squad(squad_bytes) == ingest_squad(squad_bytes)

    def test_accepts_file_object(self, squad_bytes):
        corpus = ingest_squad(io.BytesIO(squad_bytes))
        assert len(corpus) == 5


class TestIngestJsonl:
    def test_empty_stream(self):
        assert len(ingest_jsonl(b"")) == 0

    def test_two_lines_char_lengths(self):
        corpus = ingest_jsonl(b'{"context":"a b"}\n{"context":"c"}\n')
        assert len(corpus) == 2
        assert [ex.char_length for ex in corpus] == [3, 1]

    def test_bad_line_names_line_number(self):
        with pytest.raises(ParseError) as exc:
            ingest_jsonl(b'{"context":"ok"}\nnot json\n')
        assert exc.value.line == 2
        assert "line 2" in str(exc.value)

    def test_missing_context_field(self):
        with pytest.raises(SchemaError) as exc:
            ingest_jsonl(b'{"text":"x"}\n')
        assert "context" in str(exc.value)

    def test_custom_field_map(self):
        fields = JsonlFields(context="text", title="name", id="docid")
        corpus = ingest_jsonl(b'{"text":"hello world","name":"N","docid":"d7"}\n', fields)
        assert corpus[0].context == "hello world"
        assert corpus[0].title == "N"
        assert corpus[0].id == "d7"

    def test_defaults_and_line_numbered_ids(self):
        corpus = ingest_jsonl(b'{"context":"a"}\n\n{"context":"b"}\n')
        assert [ex.id for ex in corpus] == ["line-1", "line-3"]
        assert [ex.title for ex in corpus] == ["", ""]
        assert [ex.ordinal for ex in corpus] == [0, 1]


class TestWriteSubset:
    def test_empty_selection(self):
        corpus = corpus_of("a", "b")
        sink = io.BytesIO()
        count = write_subset(corpus, everything_selected(0), sink)
        assert count == 0
        assert sink.getvalue() == b""

    def test_ordinal_order(self):
        corpus = corpus_of("x", "y", "z")
        sel = Selection(low=(2,), high=(0,), mean_proximal=(), policy_echo={})
        sink = io.BytesIO()
        count = write_subset(corpus, sel, sink)
        assert count == 2
        recs = [json.loads(line) for line in sink.getvalue().decode().splitlines()]
        assert [r["ordinal"] for r in recs] == [0, 2]
        assert [r["category"] for r in recs] == ["high", "low"]

    def test_out_of_range_writes_nothing(self):
        corpus = corpus_of("x")
        sel = Selection(low=(0,), high=(5,), mean_proximal=(), policy_echo={})
        sink = io.BytesIO()
        with pytest.raises(IndexError):
            write_subset(corpus, sel, sink)
        assert sink.getvalue() == b""

    def test_scores_annotation(self):
        corpus = corpus_of("x", "y")
        sel = Selection(low=(0,), high=(1,), mean_proximal=(), policy_echo={})
        sink = io.BytesIO()
        write_subset(corpus, sel, sink, scores=[0.5, 2.5])
        recs = [json.loads(line) for line in sink.getvalue().decode().splitlines()]
        assert recs[0]["score"] == 0.5
        assert recs[1]["score"] == 2.5

    def test_jsonl_round_trip(self):
        corpus = corpus_of("The brain.", "b c", "d é f")
        sink = io.BytesIO()
        write_subset(corpus, everything_selected(3), sink, scores=[1.0, 2.0, 3.0])
        back = ingest_jsonl(sink.getvalue())
        assert [ex.context for ex in back] == [ex.context for ex in corpus]
        assert [ex.title for ex in back] == [ex.title for ex in corpus]
        assert [ex.id for ex in back] == [ex.id for ex in corpus]

    def test_squad_reconstruction(self, squad_bytes):
        corpus = ingest_squad(squad_bytes)
        sink = io.BytesIO()
        count = write_subset(corpus, everything_selected(5), sink, fmt="squad", scores=[1, 2, 3, 4, 5])
        assert count == 5
        doc = json.loads(sink.getvalue())
        assert [a["title"] for a in doc["data"]] == ["Alpha", "Beta"]
        alpha = doc["data"][0]
        assert len(alpha["paragraphs"]) == 1  # repeated contexts regroup into one paragraph
        assert [qa["id"] for qa in alpha["paragraphs"][0]["qas"]] == ["a1", "a2", "a3"]
        assert alpha["paragraphs"][0]["qas"][0]["question"] == "what?"  # payload passthrough
        assert alpha["paragraphs"][0]["qas"][0]["abnormality_score"] == 1.0
        back = ingest_squad(sink.getvalue())
        assert [ex.context for ex in back] == [ex.context for ex in corpus]

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            write_subset(corpus_of("x"), everything_selected(1), io.BytesIO(), fmt="csv")


class TestInvariants:
    def test_example_char_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Example(ordinal=0, id="x", title="", context="abc", char_length=2)

    def test_ordinal_gap_rejected(self):
        ex = Example(ordinal=1, id="x", title="", context="abc")
        with pytest.raises(ValueError):
            Corpus((ex,))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.text(max_size=40), st.text(max_size=10)), max_size=8))
    def test_jsonl_round_trip_any_text(self, pairs):
        corpus = corpus_of(*(c for c, _ in pairs), titles=[t for _, t in pairs])
        sink = io.BytesIO()
        write_subset(corpus, everything_selected(len(corpus)), sink)
        back = ingest_jsonl(sink.getvalue())
        assert [(ex.context, ex.title) for ex in back] == [(ex.context, ex.title) for ex in corpus]

    def test_ordinals_dense(self, squad_bytes):
        corpus = ingest_squad(squad_bytes)
        assert [ex.ordinal for ex in corpus] == list(range(len(corpus)))


class TestSyntheticCorpus:
    def test_deterministic(self):
        a = make_synthetic_corpus(20, seed=3)
        b = make_synthetic_corpus(20, seed=3)
        assert a == b

    def test_token_length_bounds(self):
        corpus = make_synthetic_corpus(30, min_tokens=5, max_tokens=9, seed=1)
        for ex in corpus:
            assert 5 <= len(ex.context.split()) <= 9

    def test_seed_changes_content(self):
        assert make_synthetic_corpus(5, seed=0) != make_synthetic_corpus(5, seed=1)
