"""Corpus I/O, vocabulary and a seeded synthetic corpus generator."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .codec import is_representable
from .core import (
    EmptyEntity,
    Entity,
    GridNerError,
    LabelSet,
    Sentence,
    ValidationError,
    canonicalize_entity,
    validate_sentence,
)
from .numerics import make_rng

logger = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"


class ParseError(GridNerError):
    def __init__(self, msg, line=None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


class LineValidationError(ValidationError):
    def __init__(self, msg, line):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class Vocabulary:
    """Token to id map; 0 is padding, 1 is the unknown-token fallback."""

    tokens: tuple[str, ...] = (PAD, UNK)
    min_freq: int = 1
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[:2]) != (PAD, UNK):
            raise ValidationError("vocabulary must start with the padding and unknown tokens")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self):
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        return self._index.get(token, 1)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self[t] for t in tokens], dtype=np.int64)


def build_vocab(sentences: Iterable[Sentence], min_freq: int = 1) -> Vocabulary:
    """Tokens seen at least ``min_freq`` times, most frequent first, ties broken lexicographically."""
    counts = Counter(tok for s in sentences for tok in s.tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    return Vocabulary((PAD, UNK, *kept), min_freq)


def sentence_from_json(obj, line=None) -> Sentence:
    if not isinstance(obj, dict) or "tokens" not in obj:
        raise ParseError("expected an object with 'tokens'", line)
    tokens = obj["tokens"]
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise ParseError("'tokens' must be a list of strings", line)
    ents = []
    for e in obj.get("entities", []):
        if not isinstance(e, dict) or "indices" not in e or "type" not in e:
            raise ParseError("entities need 'indices' and 'type'", line)
        try:
            ents.append(canonicalize_entity(e["indices"], e["type"]))
        except (EmptyEntity, TypeError, ValueError) as exc:
            raise LineValidationError(str(exc), line) from None
    return Sentence.build(tokens, ents)


def read_jsonl(path) -> tuple[list[Sentence], LabelSet]:
    """Read one sentence object per line; the label set lists types in first-seen order."""
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), lineno) from None
            sentences.append((lineno, sentence_from_json(obj, lineno)))
    labels = LabelSet.from_types(e.etype for _, s in sentences for e in s.entities)
    for lineno, s in sentences:
        errs = validate_sentence(s, labels)
        if errs:
            raise LineValidationError("; ".join(errs), lineno)
    return [s for _, s in sentences], labels


def write_jsonl(sentences: Iterable[Sentence], path=None) -> str:
    text = "".join(json.dumps(s.to_json(), ensure_ascii=False) + "\n" for s in sentences)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def from_conll_bio(path) -> list[Sentence]:
    """Read a BIO-tagged column file into flat entities.

    Columns are whitespace separated; the first is the token and the last the
    tag. An ``I-`` tag that does not continue a run of the same type starts a
    new entity.
    """
    sentences = []
    rows: list[tuple[int, str, str]] = []

    def flush():
        if not rows:
            return
        tokens = [r[1] for r in rows]
        ents = []
        cur: list[int] = []
        cur_type = None
        for k, (lineno, _, tag) in enumerate(rows):
            if tag == "O":
                prefix, etype = "O", None
            elif len(tag) > 2 and tag[:2] in ("B-", "I-"):
                prefix, etype = tag[0], tag[2:]
            else:
                raise ParseError(f"bad BIO tag {tag!r}", lineno)
            if prefix == "I" and cur_type != etype:
                logger.warning("line %d: orphan I-%s treated as B-%s", lineno, etype, etype)
                prefix = "B"
            if prefix != "I" and cur:
                ents.append(Entity(tuple(cur), cur_type))
                cur, cur_type = [], None
            if prefix in ("B", "I"):
                cur.append(k)
                cur_type = etype
        if cur:
            ents.append(Entity(tuple(cur), cur_type))
        sentences.append(Sentence.build(tokens, ents))
        rows.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                flush()
                continue
            if line.startswith("-DOCSTART-"):
                continue
            cols = line.split()
            if len(cols) < 2:
                raise ParseError("expected at least a token and a tag", lineno)
            rows.append((lineno, cols[0], cols[-1]))
    flush()
    return sentences


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic corpus.

    Each of up to ``max_entities`` entity slots per sentence becomes a flat,
    nested or discontinuous structure with the given rates, or stays empty with
    the remaining probability.
    """

    n_sentences: int = 100
    min_len: int = 4
    max_len: int = 20
    entity_types: tuple[str, ...] = ("PER", "LOC", "SYM")
    flat_rate: float = 0.4
    nested_rate: float = 0.3
    disc_rate: float = 0.3
    max_entities: int = 4
    max_span: int = 8
    seed: int = 0
    filler_count: int = 40
    entity_token_count: int = 12

    def __post_init__(self):
        rates = (self.flat_rate, self.nested_rate, self.disc_rate)
        if any(r < 0 for r in rates) or sum(rates) > 1 + 1e-12:
            raise ValidationError("rates must be non-negative and sum to at most 1")
        if not 1 <= self.min_len <= self.max_len:
            raise ValidationError("need 1 <= min_len <= max_len")
        if self.max_span < 3:
            raise ValidationError("max_span must be at least 3")
        if not self.entity_types:
            raise ValidationError("need at least one entity type")


def _contiguous(rng, n, max_span, min_width=1):
    width = int(rng.integers(min_width, min(max_span, n) + 1))
    start = int(rng.integers(0, n - width + 1))
    return list(range(start, start + width))


def _nested(rng, n, max_span):
    outer = _contiguous(rng, n, max_span, min_width=2)
    w = int(rng.integers(1, len(outer)))
    start = int(rng.integers(0, len(outer) - w + 1))
    return [outer, outer[start:start + w]]


def _discontinuous(rng, n, max_span):
    span = int(rng.integers(3, min(max_span, n) + 1))
    start = int(rng.integers(0, n - span + 1))
    body = list(range(start, start + span))
    kind = rng.random()
    if kind < 0.25 and span >= 5:
        # two discontinuous mentions crossing at a shared word (ACD / BCE over ABCDE)
        mid = sorted(int(k) for k in rng.choice(np.arange(1, span - 1), size=3, replace=False))
        q = [body[0], body[mid[0]], body[mid[1]], body[mid[2]], body[-1]]
        return [[q[0], q[2], q[3]], [q[1], q[2], q[4]]]
    cut_a = int(rng.integers(1, span - 1))
    cut_b = int(rng.integers(cut_a + 1, span))
    disc = body[:cut_a] + body[cut_b:]
    if kind < 0.6:
        # contiguous sibling sharing the prefix (ABC / ABD)
        return [disc, body[:cut_b]]
    return [disc]


def _token_for(rng, etype, spec):
    return f"{etype.lower()}{int(rng.integers(spec.entity_token_count))}"


def gen_synthetic(spec: SynthSpec) -> list[Sentence]:
    """Deterministic corpus mixing flat, nested and discontinuous mentions.

    Every sentence is checked to survive an encode/decode round trip and is
    redrawn until it does.
    """
    rng = make_rng(spec.seed)
    labels = LabelSet(tuple(spec.entity_types))
    kinds = ["flat", "nested", "disc", "none"]
    probs = np.array([spec.flat_rate, spec.nested_rate, spec.disc_rate,
                      max(0.0, 1.0 - spec.flat_rate - spec.nested_rate - spec.disc_rate)])
    probs = probs / probs.sum()
    out = []
    while len(out) < spec.n_sentences:
        n = int(rng.integers(spec.min_len, spec.max_len + 1))
        ents = []
        used: set[int] = set()
        for _ in range(spec.max_entities):
            kind = kinds[rng.choice(4, p=probs)]
            if kind == "flat":
                group = [_contiguous(rng, n, spec.max_span)]
            elif kind == "nested" and n >= 2:
                group = _nested(rng, n, spec.max_span)
            elif kind == "disc" and n >= 3:
                group = _discontinuous(rng, n, spec.max_span)
            else:
                continue
            covered = {i for idx in group for i in idx}
            # groups never share words, and a group is kept whole or not at all
            if covered & used or len(ents) + len(group) > spec.max_entities:
                continue
            used |= covered
            ents.extend(Entity(tuple(idx), str(rng.choice(spec.entity_types))) for idx in group)
        ents = list(dict.fromkeys(ents))
        tokens = [f"w{int(rng.integers(spec.filler_count))}" for _ in range(n)]
        for e in ents:
            for i in e.indices:
                tokens[i] = _token_for(rng, e.etype, spec)
        s = Sentence(tuple(tokens), tuple(ents))
        if validate_sentence(s, labels) or not is_representable(s, labels):
            continue
        out.append(s)
    return out
