"""Exact-match micro precision/recall/F1 and the overlapped/discontinuous subsets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import Entity, GridNerError

SUBSETS = ("overlapped", "discontinuous")


class LengthMismatch(GridNerError):
    pass


@dataclass(frozen=True)
class PRF:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: PRF) -> PRF:
        return PRF(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def as_lines(self, prefix: str = "") -> list[str]:
        """``key=value`` lines for scripts."""
        vals = {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": f"{self.precision:.6f}",
            "recall": f"{self.recall:.6f}",
            "f1": f"{self.f1:.6f}",
        }
        return [f"{prefix}{k}={v}" for k, v in vals.items()]


def _count(pred: set, gold: set) -> PRF:
    tp = len(pred & gold)
    return PRF(tp, len(pred) - tp, len(gold) - tp)


def micro_prf(pred: Sequence[Iterable[Entity]], gold: Sequence[Iterable[Entity]]) -> PRF:
    """Pool exact (indices, type) matches over aligned per-sentence entity sets."""
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} predicted sentences vs {len(gold)} gold")
    total = PRF(0, 0, 0)
    for p, g in zip(pred, gold):
        total = total + _count(set(p), set(g))
    return total


def overlapped_entities(ents: Iterable[Entity]) -> set[Entity]:
    """Entities that share at least one token with another entity of the same set."""
    ents = list(dict.fromkeys(ents))
    out = set()
    for a in ents:
        words = set(a.indices)
        if any(b is not a and words.intersection(b.indices) for b in ents):
            out.add(a)
    return out


def discontinuous_entities(ents: Iterable[Entity]) -> set[Entity]:
    return {e for e in ents if e.is_discontinuous}


def subset_prf(pred, gold, subset: str) -> PRF:
    """Micro PRF restricted to one structural subset.

    Each side is filtered by its own entity set: a prediction counts as
    overlapped only if it overlaps another prediction.
    """
    if subset == "overlapped":
        pick = overlapped_entities
    elif subset == "discontinuous":
        pick = discontinuous_entities
    else:
        raise ValueError(f"unknown subset {subset!r}; expected one of {SUBSETS}")
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} predicted sentences vs {len(gold)} gold")
    return micro_prf([pick(p) for p in pred], [pick(g) for g in gold])


def report(pred, gold) -> str:
    """Readable table followed by machine-readable ``key=value`` lines."""
    rows = [("all", micro_prf(pred, gold))] + [(s, subset_prf(pred, gold, s)) for s in SUBSETS]
    out = [f"{'subset':<14}{'P':>9}{'R':>9}{'F1':>9}{'TP':>7}{'FP':>7}{'FN':>7}"]
    for name, m in rows:
        out.append(f"{name:<14}{m.precision:>9.4f}{m.recall:>9.4f}{m.f1:>9.4f}{m.tp:>7}{m.fp:>7}{m.fn:>7}")
    out.append("")
    for name, m in rows:
        out.extend(m.as_lines(prefix=f"{name}."))
    return "\n".join(out) + "\n"
