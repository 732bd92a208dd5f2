"""Scoring predictions overall and on the overlapped and discontinuous subsets."""

from gridner.core import Entity
from gridner.metrics import report, subset_prf

E = Entity
gold = [
    {E((0, 1, 2), "X"), E((1, 2), "X"), E((5,), "Y")},
    {E((0, 2), "X"), E((0, 1), "X")},
]
# Misses the inner mention and reads the discontinuous one as contiguous.
pred = [
    {E((0, 1, 2), "X"), E((5,), "Y")},
    {E((0, 1, 2), "X"), E((0, 1), "X")},
]
print(report(pred, gold))

# Each side is filtered by its own structure: the lone (0,1,2) prediction in
# sentence one overlaps no other prediction, so it drops out of that subset.
print(subset_prf(pred, gold, "overlapped"))
