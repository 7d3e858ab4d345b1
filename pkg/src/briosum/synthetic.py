"""Synthetic lead-sentence summarization corpora for tests and demos.

Each document is a lead sentence followed by filler sentences; the
reference summary is the lead sentence with light word-substitution noise.
That makes summarization learnable at toy scale (copy the lead) while
keeping references non-deterministic enough that candidate ranking has
something to disagree about.
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from .corpus import Document

_CONSONANTS = "bcdfglmnprstvz"
_VOWELS = "aeiou"


def toy_word_list(count: int = 140) -> list[str]:
    """Deterministic pseudo-words built from consonant-vowel syllables."""
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
    words = list(syllables)
    for a in syllables:
        for b in syllables:
            if len(words) >= count:
                return words[:count]
            words.append(a + b)
    return words[:count]


def make_toy_corpus(
    num_docs: int,
    seed: int,
    vocab_words: int = 60,
    lead_len: tuple[int, int] = (6, 10),
    filler_sentences: tuple[int, int] = (1, 2),
    noise_rate: float = 0.02,
) -> list[Document]:
    """Generate documents whose summary is the noisy lead sentence."""
    words = toy_word_list(vocab_words)
    rng = random.Random(seed)
    docs: list[Document] = []
    for i in range(num_docs):
        lead = [rng.choice(words) for _ in range(rng.randint(*lead_len))]
        sentences = [lead]
        for _ in range(rng.randint(*filler_sentences)):
            sentences.append([rng.choice(words) for _ in range(rng.randint(*lead_len))])
        source = " ".join(" ".join(s) + " ." for s in sentences)
        summary_words = [
            rng.choice(words) if rng.random() < noise_rate else w for w in lead
        ]
        summary = " ".join(summary_words) + " ."
        docs.append(
            Document(
                id=f"doc{i:04d}",
                source_text=source,
                reference_summary=summary,
                category=f"topic{i % 5}",
            )
        )
    return docs


def write_corpus_jsonl(docs: list[Document], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in docs:
            record = {
                "id": doc.id,
                "document": doc.source_text,
                "summary": doc.reference_summary,
            }
            if doc.category is not None:
                record["category"] = doc.category
            fh.write(json.dumps(record))
            fh.write("\n")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Write a synthetic lead-sentence summarization corpus as JSONL."
    )
    parser.add_argument("output", help="destination .jsonl path")
    parser.add_argument("--docs", type=int, default=500)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--vocab-words", type=int, default=60)
    parser.add_argument("--noise", type=float, default=0.02, help="word substitution rate in summaries")
    args = parser.parse_args(argv)
    docs = make_toy_corpus(args.docs, args.seed, vocab_words=args.vocab_words, noise_rate=args.noise)
    write_corpus_jsonl(docs, args.output)
    print(f"wrote {len(docs)} documents to {args.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
