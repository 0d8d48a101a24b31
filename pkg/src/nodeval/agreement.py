"""Cohen's kappa between readers, with category merging."""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

LIKERT = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class RatingVector:
    values: Tuple[int, ...]
    categories: Tuple[int, ...] = LIKERT

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        object.__setattr__(self, "categories", tuple(self.categories))
        if len(set(self.categories)) != len(self.categories):
            raise ValueError("duplicate category in category space")
        allowed = set(self.categories)
        for i, v in enumerate(self.values):
            if v not in allowed:
                raise ValueError(f"rating {v} at position {i} is outside categories {self.categories}")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    observed: float
    expected: float
    contingency: np.ndarray = field(repr=False)
    degenerate: bool = False


def merge_mapping(categories: Sequence[int], merges: Iterable[Tuple[int, int]]) -> Dict[int, int]:
    """Build a collapse mapping from ``(source, target)`` merges.

    Sources are folded into their targets and the surviving categories are
    renumbered consecutively from the smallest one, so merging 3 into 2 on
    a 1..5 scale gives ``{1: 1, 2: 2, 3: 2, 4: 3, 5: 4}``.
    """
    parent = {c: c for c in categories}
    for src, dst in merges:
        if src not in parent or dst not in parent:
            raise ValueError(f"merge {src}:{dst} names a category outside {tuple(categories)}")
        parent[src] = dst

    def root(c):
        seen = set()
        while parent[c] != c:
            if c in seen:
                raise ValueError("merge rules form a cycle")
            seen.add(c)
            c = parent[c]
        return c

    survivors = sorted({root(c) for c in categories})
    base = min(categories)
    renumber = {c: base + i for i, c in enumerate(survivors)}
    return {c: renumber[root(c)] for c in categories}


def parse_merge(spec: str) -> List[Tuple[int, int]]:
    """Parse ``"3:2"`` or ``"3:2,5:4"`` into merge pairs."""
    pairs = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            src, dst = part.split(":")
            pairs.append((int(src), int(dst)))
        except ValueError:
            raise ValueError(f"bad merge rule {part!r}, expected SRC:DST") from None
    return pairs


def collapse_categories(ratings: RatingVector, mapping: Mapping[int, int]) -> RatingVector:
    missing = [c for c in ratings.categories if c not in mapping]
    if missing:
        raise ValueError(f"mapping has no target for categories {missing}")
    image = tuple(sorted({mapping[c] for c in ratings.categories}))
    return RatingVector(tuple(mapping[v] for v in ratings.values), image)


def contingency_table(a: RatingVector, b: RatingVector) -> np.ndarray:
    index = {c: i for i, c in enumerate(a.categories)}
    table = np.zeros((len(index), len(index)), dtype=np.int64)
    np.add.at(table, ([index[v] for v in a.values], [index[v] for v in b.values]), 1)
    return table


def cohen_kappa(a: RatingVector, b: RatingVector) -> KappaResult:
    """Unweighted Cohen's kappa.

    When both raters use one identical category throughout (p_o = p_e = 1)
    kappa is reported as 1.0 with ``degenerate=True``.
    """
    if len(a) != len(b):
        raise ValueError(f"rating vectors differ in length ({len(a)} vs {len(b)})")
    if len(a) == 0:
        raise ValueError("need at least one rated case")
    if set(a.categories) != set(b.categories):
        raise ValueError("rating vectors use different category spaces")
    if a.categories != b.categories:
        b = RatingVector(b.values, a.categories)
    table = contingency_table(a, b)
    n = table.sum()
    p_o = np.trace(table) / n
    p_e = float(table.sum(axis=1) @ table.sum(axis=0)) / (n * n)
    if p_e == 1.0:
        return KappaResult(1.0, float(p_o), p_e, table, degenerate=True)
    return KappaResult(float((p_o - p_e) / (1.0 - p_e)), float(p_o), p_e, table)


def kappa_matrix(readers: Sequence[RatingVector]) -> Dict[Tuple[int, int], KappaResult]:
    """Pairwise kappas keyed by ``(i, j)`` with ``i < j`` in reader order."""
    if len(readers) < 2:
        raise ValueError("kappa matrix needs at least two readers")
    return {(i, j): cohen_kappa(readers[i], readers[j])
            for i in range(len(readers)) for j in range(i + 1, len(readers))}
