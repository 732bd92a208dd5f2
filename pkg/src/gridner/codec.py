"""Conversion between entity sets and word-pair relation grids.

Encoding marks every pair of consecutive mention words with NNW (upper
triangle) and links the mention's last word back to its first word with a
typed THW relation (lower triangle or diagonal). Decoding walks NNW edges from
each THW head towards its tail and emits every complete path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    NNW,
    THW_OFFSET,
    Entity,
    GridNerError,
    LabelSet,
    RelationGrid,
    Sentence,
    ValidationError,
    entity_sort_key,
    validate_sentence,
)


class ThwConflict(GridNerError):
    """Two entities need different THW types in the same (tail, head) cell."""


class PathExplosion(GridNerError):
    """Decoding produced more paths than the configured cap."""


@dataclass(frozen=True)
class DecodeOptions:
    max_path_count: int = 10_000
    dedupe: bool = True

    def __post_init__(self):
        if self.max_path_count < 1:
            raise ValueError("max_path_count must be >= 1")


def encode_grid(s: Sentence, labels: LabelSet) -> RelationGrid:
    errs = validate_sentence(s, labels)
    if errs:
        raise ValidationError("; ".join(errs))
    n = len(s.tokens)
    cells = np.zeros((n, n), dtype=np.int64)
    for e in s.entities:
        for a, b in zip(e.indices, e.indices[1:]):
            cells[a, b] = NNW
        rel = labels.thw_id(e.etype)
        prev = cells[e.tail, e.head]
        if prev >= THW_OFFSET and prev != rel:
            raise ThwConflict(
                f"cell ({e.tail},{e.head}) needs both {labels.relation_name(int(prev))} "
                f"and {labels.relation_name(rel)}"
            )
        cells[e.tail, e.head] = rel
    return RelationGrid(cells)


def decode_grid(g: RelationGrid, labels: LabelSet, opts: DecodeOptions = DecodeOptions()) -> list[Entity]:
    """Recover entities from a grid by depth-first search over NNW edges.

    For every THW cell ``(tail, head)`` with ``tail >= head``: a diagonal cell
    yields the single-word entity; otherwise every NNW path from ``head`` that
    only visits increasing positions ``<= tail`` and ends at ``tail`` is emitted.

    Raises:
        PathExplosion: more than ``opts.max_path_count`` entities were produced.
    """
    cells = g.cells
    n = g.n
    if cells.size and cells.max() >= labels.relation_count:
        raise ValidationError(f"grid holds relation id {int(cells.max())} outside the label set")
    successors = [np.flatnonzero(cells[m, m + 1:] == NNW) + m + 1 for m in range(n)]

    found: list[Entity] = []

    def emit(path, etype):
        found.append(Entity(tuple(path), etype))
        if len(found) > opts.max_path_count:
            raise PathExplosion(f"more than {opts.max_path_count} entities decoded")

    tails, heads = np.nonzero(np.tril(cells >= THW_OFFSET))
    for tail, head in zip(tails.tolist(), heads.tolist()):
        etype = labels.type_of(int(cells[tail, head]))
        if tail == head:
            emit([head], etype)
            continue
        # explicit stack of (path, next-successor cursor)
        path = [head]
        stack = [iter(successors[head])]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None or nxt > tail:
                # successors are ascending, nothing further can reach the tail
                stack.pop()
                path.pop()
                continue
            if nxt == tail:
                emit(path + [tail], etype)
                continue
            path.append(int(nxt))
            stack.append(iter(successors[nxt]))

    if opts.dedupe:
        found = list(dict.fromkeys(found))
    found.sort(key=entity_sort_key)
    return found


def is_representable(s: Sentence, labels: LabelSet) -> bool:
    """True if encoding then decoding ``s`` gives back exactly its entity set."""
    try:
        grid = encode_grid(s, labels)
        decoded = decode_grid(grid, labels)
    except (ThwConflict, PathExplosion):
        return False
    return set(decoded) == set(s.entities)


def format_grid_dump(g: RelationGrid, labels: LabelSet, tokens=None) -> str:
    """Line-oriented dump: ``n=<N>``, optional ``#tokens`` line, one ``i<TAB>j<TAB>label`` per non-NONE cell."""
    lines = [f"n={g.n}"]
    if tokens is not None:
        lines.append("\t".join(["#tokens", *tokens]))
    for i, j, rel in g.nonzero_cells():
        lines.append(f"{i}\t{j}\t{labels.relation_name(rel)}")
    return "\n".join(lines) + "\n"


def parse_grid_dumps(text: str, labels: LabelSet | None = None):
    """Parse one or more blank-line separated grid dumps.

    Returns ``(records, labels)`` where each record is ``(grid, tokens_or_None)``.
    When ``labels`` is None the types are collected from THW names in order of
    first appearance.
    """
    blocks = [b for b in text.split("\n\n") if b.strip()]
    raw = []
    seen_types = []
    for block in blocks:
        lines = [ln for ln in block.splitlines() if ln.strip()]
        head = lines[0].strip()
        if not head.startswith("n="):
            raise ValidationError(f"grid dump must start with 'n=<N>', got {head!r}")
        n = int(head[2:])
        tokens = None
        cells = []
        for ln in lines[1:]:
            parts = ln.rstrip("\n").split("\t")
            if parts[0] == "#tokens":
                tokens = parts[1:]
                continue
            if ln.startswith("#"):
                continue
            if len(parts) != 3:
                raise ValidationError(f"bad grid dump line {ln!r}")
            i, j, name = int(parts[0]), int(parts[1]), parts[2]
            if name.startswith("THW-") and name[4:] not in seen_types:
                seen_types.append(name[4:])
            cells.append((i, j, name))
        raw.append((n, tokens, cells))
    if labels is None:
        labels = LabelSet(tuple(seen_types))
    records = []
    for n, tokens, cells in raw:
        arr = np.zeros((n, n), dtype=np.int64)
        for i, j, name in cells:
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"cell ({i},{j}) outside grid of size {n}")
            arr[i, j] = labels.relation_id(name)
        grid = RelationGrid(arr)
        errs = grid.problems()
        if errs:
            raise ValidationError("; ".join(errs))
        records.append((grid, tokens))
    return records, labels


def render_grid(g: RelationGrid, labels: LabelSet, tokens) -> str:
    """Human-readable matrix with tokens on both axes and '.' for NONE."""
    names = [("." if r == 0 else labels.relation_name(r)) for r in range(labels.relation_count)]
    width = max([len(t) for t in tokens] + [len(x) for x in names]) + 1
    out = [" " * width + "".join(t.rjust(width) for t in tokens)]
    for i, tok in enumerate(tokens):
        row = "".join(names[int(r)].rjust(width) for r in g.cells[i])
        out.append(tok.rjust(width) + row)
    return "\n".join(out) + "\n"
