"""Multi-objective core: dominance, compression metric, hypervolume, contributions.

Both objectives (reconstruction loss, level of compression) are minimized.
The hypervolume of a point set is the area of objective space dominated by
the set and bounded by a reference point; each individual's fitness is its
exclusive contribution to that area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class InvalidShapeError(ValueError):
    """Raised for an empty bottleneck shape or a non-positive dimension."""


class InvalidPointError(ValueError):
    """Raised for objective points with non-finite or out-of-domain values."""


@dataclass(frozen=True)
class ObjectivePoint:
    """A (reconstruction loss, level of compression) pair, both minimized."""

    rec_loss: float
    loc: float

    def __post_init__(self):
        if not (math.isfinite(self.rec_loss) and math.isfinite(self.loc)):
            raise InvalidPointError(f"non-finite objective point ({self.rec_loss}, {self.loc})")
        if self.rec_loss < 0:
            raise InvalidPointError(f"negative reconstruction loss {self.rec_loss}")
        if self.loc < 0:
            raise InvalidPointError(f"negative level of compression {self.loc}")

    def as_tuple(self) -> tuple[float, float]:
        return (self.rec_loss, self.loc)


@dataclass(frozen=True)
class ReferencePoint:
    """Per-objective worst-case anchor bounding the hypervolume box."""

    rec_loss_ref: float = 4.0
    loc_ref: float = 12.0

    def __post_init__(self):
        if not (self.rec_loss_ref > 0 and self.loc_ref > 0):
            raise InvalidPointError(
                f"reference coordinates must be strictly positive, got "
                f"({self.rec_loss_ref}, {self.loc_ref})"
            )


def level_of_compression(shape: Sequence[int]) -> float:
    """log10 of the bottleneck element count; lower means more compression.

    Args:
        shape: bottleneck dimensions, all >= 1.

    Raises:
        InvalidShapeError: empty shape or any dimension < 1.
    """
    dims = list(shape)
    if not dims:
        raise InvalidShapeError("empty bottleneck shape")
    count = 1
    for d in dims:
        if int(d) != d or d < 1:
            raise InvalidShapeError(f"invalid bottleneck dimension {d!r} in {dims}")
        count *= int(d)
    return math.log10(count)


def _coerce(p) -> tuple[float, float]:
    if isinstance(p, ObjectivePoint):
        return p.as_tuple()
    a, b = float(p[0]), float(p[1])
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InvalidPointError(f"non-finite objective point ({a}, {b})")
    return (a, b)


def dominates(a, b) -> bool:
    """True iff a is no worse than b in both objectives and a != b (minimization)."""
    a1, a2 = _coerce(a)
    b1, b2 = _coerce(b)
    return a1 <= b1 and a2 <= b2 and (a1, a2) != (b1, b2)


def hypervolume(points: Iterable, ref: ReferencePoint) -> float:
    """Exact 2-D hypervolume of ``points`` relative to ``ref``.

    Area of the union of rectangles [p.rec_loss, ref.rec_loss] x
    [p.loc, ref.loc]. Points with any coordinate at or beyond the reference
    contribute zero area. Duplicate and dominated points do not change the
    result; neither does input order.

    Raises:
        InvalidPointError: any non-finite point coordinate.
    """
    coords = sorted({_coerce(p) for p in points})
    in_box = [(r, l) for r, l in coords if r < ref.rec_loss_ref and l < ref.loc_ref]
    # Sorted by rec_loss then loc: a point survives iff it strictly improves
    # the best loc seen so far, which drops dominated points and duplicates.
    staircase: list[tuple[float, float]] = []
    best_loc = math.inf
    for r, l in in_box:
        if l < best_loc:
            staircase.append((r, l))
            best_loc = l
    area = 0.0
    for i, (r, l) in enumerate(staircase):
        next_r = staircase[i + 1][0] if i + 1 < len(staircase) else ref.rec_loss_ref
        area += (next_r - r) * (ref.loc_ref - l)
    return area


def chvi(i: int, points: Sequence, ref: ReferencePoint) -> float:
    """Exclusive hypervolume contribution of ``points[i]``.

    Hypervolume of the full set minus the hypervolume with element i
    removed. Zero for points that are dominated, duplicated elsewhere in
    the sequence, or outside the reference box.

    Raises:
        IndexError: i is not a valid index into points.
    """
    pts = list(points)
    if not (0 <= i < len(pts)):
        raise IndexError(f"chvi index {i} out of range for {len(pts)} points")
    rest = pts[:i] + pts[i + 1 :]
    diff = hypervolume(pts, ref) - hypervolume(rest, ref)
    return diff if diff > 0.0 else 0.0


def hypervolume_monte_carlo(
    points: Iterable, ref: Sequence[float], n_samples: int = 10**6, seed: int = 0
) -> float:
    """Monte-Carlo hypervolume estimate for any number of objectives.

    Samples uniformly in the box [0, ref] and measures the fraction
    dominated by at least one point. Intended for future extra objectives;
    the 2-objective path should use the exact ``hypervolume``.
    """
    ref_arr = np.asarray(ref, dtype=float)
    pts = np.asarray([_coerce(p) if ref_arr.size == 2 else tuple(p) for p in points], dtype=float)
    if pts.size == 0:
        return 0.0
    if not np.isfinite(pts).all():
        raise InvalidPointError("non-finite objective point")
    rng = np.random.default_rng(seed)
    box_volume = float(np.prod(ref_arr))
    hits = 0
    chunk = 200_000
    remaining = n_samples
    while remaining > 0:
        n = min(chunk, remaining)
        samples = rng.random((n, ref_arr.size)) * ref_arr
        dominated = (samples[:, None, :] >= pts[None, :, :]).all(axis=2).any(axis=1)
        hits += int(dominated.sum())
        remaining -= n
    return box_volume * hits / n_samples


@dataclass
class ArchiveEntry:
    point: ObjectivePoint
    genome_id: str
    generation: int


@dataclass
class ParetoArchive:
    """Mutually non-dominated set of evaluated points, unique by (point, id).

    Insertion keeps the archive's hypervolume non-decreasing: dominated
    candidates are rejected, and accepted candidates evict every entry they
    dominate. Mutation is single-writer by contract.
    """

    entries: list[ArchiveEntry] = field(default_factory=list)

    def insert(self, point: ObjectivePoint, genome_id: str, generation: int) -> bool:
        """Offer a point; returns True iff the archive changed."""
        for e in self.entries:
            if dominates(e.point, point):
                return False
            if e.point == point and e.genome_id == genome_id:
                return False
        self.entries = [e for e in self.entries if not dominates(point, e.point)]
        self.entries.append(ArchiveEntry(point, genome_id, generation))
        return True

    def points(self) -> list[ObjectivePoint]:
        return [e.point for e in self.entries]

    def hypervolume(self, ref: ReferencePoint) -> float:
        return hypervolume(self.points(), ref)

    def __len__(self) -> int:
        return len(self.entries)


def archive_insert(
    archive: ParetoArchive, point: ObjectivePoint, genome_id: str, generation: int
) -> ParetoArchive:
    """Functional wrapper over ParetoArchive.insert; returns the archive."""
    archive.insert(point, genome_id, generation)
    return archive
