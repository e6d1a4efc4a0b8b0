from __future__ import annotations

import json

import pytest

from abnormality.corpus import Corpus, Example

SQUAD_DOC = {
    "version": "1.1",
    "data": [
        {
            "title": "Alpha",
            "paragraphs": [
                {
                    "context": "The brain, the brain.",
                    "qas": [
                        {"id": "a1", "question": "what?", "answers": [{"text": "brain", "answer_start": 4}]},
                        {"id": "a2", "question": "which?", "answers": []},
                        {"id": "a3", "question": "why?", "answers": []},
                    ],
                },
            ],
        },
        {
            "title": "Beta",
            "paragraphs": [
                {"context": "b c", "qas": [{"id": "b1", "question": "huh?"}]},
                {"context": "d e f g", "qas": [{"id": "b2", "question": "eh?"}]},
            ],
        },
    ],
}


@pytest.fixture
def squad_bytes() -> bytes:
    return json.dumps(SQUAD_DOC).encode("utf-8")


def corpus_of(*contexts: str, titles: list[str] | None = None) -> Corpus:
    examples = tuple(
        Example(
            ordinal=i,
            id=f"ex-{i}",
            title=titles[i] if titles else f"t{i}",
            context=ctx,
        )
        for i, ctx in enumerate(contexts)
    )
    return Corpus(examples, source_descriptor="inline")
