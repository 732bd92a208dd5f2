"""Domain types shared across the package: label sets, entities, sentences and grids."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

NONE = 0
NNW = 1
THW_OFFSET = 2


class GridNerError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GridNerError):
    pass


class EmptyEntity(ValidationError):
    pass


class ShapeMismatch(GridNerError, ValueError):
    pass


class NonFinite(GridNerError, FloatingPointError):
    pass


@dataclass(frozen=True)
class LabelSet:
    """Ordered entity types and the relation ids derived from them.

    Relation ids are ``NONE=0``, ``NNW=1`` and ``THW-<type> = 2 + index(type)``.
    """

    entity_types: tuple[str, ...] = ()

    def __post_init__(self):
        types = tuple(self.entity_types)
        object.__setattr__(self, "entity_types", types)
        for t in types:
            if not isinstance(t, str) or not t:
                raise ValidationError(f"entity type names must be non-empty strings, got {t!r}")
        if len(set(types)) != len(types):
            raise ValidationError(f"duplicate entity type names in {types}")

    @classmethod
    def from_types(cls, types: Iterable[str]) -> LabelSet:
        """Build a label set from types in first-seen order, ignoring repeats."""
        seen = dict.fromkeys(types)
        return cls(tuple(seen))

    @property
    def relation_count(self) -> int:
        return THW_OFFSET + len(self.entity_types)

    def thw_id(self, etype: str) -> int:
        try:
            return THW_OFFSET + self.entity_types.index(etype)
        except ValueError:
            raise ValidationError(f"unknown type {etype}") from None

    def type_of(self, relation_id: int) -> str:
        """Entity type carried by a THW relation id."""
        if not THW_OFFSET <= relation_id < self.relation_count:
            raise ValidationError(f"relation id {relation_id} is not a THW relation")
        return self.entity_types[relation_id - THW_OFFSET]

    def relation_name(self, relation_id: int) -> str:
        if relation_id == NONE:
            return "NONE"
        if relation_id == NNW:
            return "NNW"
        return "THW-" + self.type_of(relation_id)

    def relation_id(self, name: str) -> int:
        if name == "NONE":
            return NONE
        if name == "NNW":
            return NNW
        if name.startswith("THW-"):
            return self.thw_id(name[4:])
        raise ValidationError(f"unknown relation name {name!r}")

    def __contains__(self, etype: object) -> bool:
        return etype in self.entity_types

    def __len__(self) -> int:
        return len(self.entity_types)


@dataclass(frozen=True, order=True)
class Entity:
    """A mention as a strictly increasing tuple of 0-based token positions plus a type."""

    indices: tuple[int, ...]
    etype: str

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    @property
    def head(self) -> int:
        return self.indices[0]

    @property
    def tail(self) -> int:
        return self.indices[-1]

    @property
    def is_discontinuous(self) -> bool:
        return self.indices[-1] - self.indices[0] + 1 != len(self.indices)

    def problems(self) -> list[str]:
        errs = []
        if not self.indices:
            errs.append("entity has no indices")
        elif any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            errs.append(f"indices not strictly increasing: {list(self.indices)}")
        return errs

    def to_json(self) -> dict:
        return {"indices": list(self.indices), "type": self.etype}


def canonicalize_entity(raw_indices: Sequence[int], etype: str) -> Entity:
    """Sort and deduplicate ``raw_indices``; raise :class:`EmptyEntity` if nothing is left."""
    indices = sorted({int(i) for i in raw_indices})
    if not indices:
        raise EmptyEntity(f"entity of type {etype!r} has no token indices")
    return Entity(tuple(indices), etype)


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    entities: tuple[Entity, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "entities", tuple(self.entities))

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, tokens: Sequence[str], entities: Iterable[Entity]) -> Sentence:
        """Construct a sentence, dropping repeated (indices, type) entities with a warning."""
        entities = list(entities)
        unique = list(dict.fromkeys(entities))
        if len(unique) < len(entities):
            logger.warning("dropped %d duplicate entities", len(entities) - len(unique))
        return cls(tuple(tokens), tuple(unique))

    def to_json(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "entities": [e.to_json() for e in sorted(self.entities, key=entity_sort_key)],
        }


def entity_sort_key(e: Entity):
    return (e.tail, e.head, e.indices, e.etype)


def validate_sentence(s: Sentence, labels: LabelSet) -> list[str]:
    """Return every invariant violation in ``s``; an empty list means the sentence is valid."""
    errs = []
    n = len(s.tokens)
    if n == 0:
        errs.append("sentence has no tokens")
    for k, tok in enumerate(s.tokens):
        if not isinstance(tok, str) or not tok:
            errs.append(f"token {k} is empty")
    seen = set()
    for e in s.entities:
        errs.extend(e.problems())
        for i in e.indices:
            if not 0 <= i < n:
                errs.append(f"index {i} out of range for sentence of length {n}")
        if e.etype not in labels:
            errs.append(f"unknown type {e.etype}")
        if e in seen:
            errs.append(f"duplicate entity {list(e.indices)} {e.etype}")
        seen.add(e)
    return errs


@dataclass(frozen=True)
class RelationGrid:
    """An ``n x n`` matrix of relation ids; row is the source word, column the target."""

    cells: np.ndarray = field(compare=False)

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int64, copy=True)
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1]:
            raise ShapeMismatch(f"grid must be square, got shape {cells.shape}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def empty(cls, n: int) -> RelationGrid:
        return cls(np.zeros((n, n), dtype=np.int64))

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RelationGrid):
            return NotImplemented
        return np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash(self.cells.tobytes())

    def problems(self) -> list[str]:
        """Triangular-region violations: NNW must sit above the diagonal, THW on or below."""
        errs = []
        upper = np.triu(np.ones((self.n, self.n), dtype=bool), k=1)
        bad_nnw = np.argwhere((self.cells == NNW) & ~upper)
        bad_thw = np.argwhere((self.cells >= THW_OFFSET) & upper)
        errs += [f"NNW at ({i},{j}) is not above the diagonal" for i, j in bad_nnw]
        errs += [f"THW at ({i},{j}) is above the diagonal" for i, j in bad_thw]
        if (self.cells < 0).any():
            errs.append("negative relation id")
        return errs

    def nonzero_cells(self) -> list[tuple[int, int, int]]:
        return [(int(i), int(j), int(self.cells[i, j])) for i, j in np.argwhere(self.cells != NONE)]
