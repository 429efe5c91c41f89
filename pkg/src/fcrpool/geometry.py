"""Construction of radius-limited constraint sets from planar points.

Given connection points with planar coordinates in meters, this module finds
every maximal group of points that fits inside a circle of a given radius
(100 m by default). Each such group later becomes one cardinality constraint
on the pool schedule: no more than ``circle_cap`` of its members may be
active at the same time.

The search enumerates, for every point, the circles of the target radius
passing through that point and each neighbor within one diameter. Any
maximal enclosable group is witnessed by at least one such two-point circle,
so collecting the point sets of all these circles and discarding non-maximal
ones yields the complete family.

All distance comparisons use a small absolute tolerance ``EPS`` so that
points lying exactly on a circle boundary are included regardless of
floating-point rounding.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .errors import (
    DegeneratePair,
    DuplicateId,
    EmptyInput,
    NonFiniteInput,
    TooFarApart,
    UnknownId,
)

#: Absolute tolerance, in meters, applied to every distance comparison.
EPS = 1e-9

#: Default constraint-circle radius in meters.
DEFAULT_RADIUS = 100.0


@dataclass(frozen=True)
class ConnectionPoint:
    """A grid connection point: asset id plus planar coordinates in meters."""

    id: int
    x: float
    y: float


@dataclass(frozen=True)
class CircleSet:
    """One maximal enclosable group with a witnessing circle.

    ``members`` is sorted ascending; ``center`` is the center of the smallest
    circle enclosing the members, which always has radius at most
    ``radius + EPS``.
    """

    members: tuple[int, ...]
    center: tuple[float, float]
    radius: float


class CircleFamily:
    """The complete family of maximal enclosable groups for one radius.

    ``sets`` is sorted lexicographically by member ids; ``per_asset_index``
    maps every asset id to the indices of the sets containing it.
    """

    def __init__(self, radius: float, sets: tuple[CircleSet, ...]):
        self.radius = float(radius)
        self.sets = tuple(sets)
        index: dict[int, list[int]] = {}
        for k, cs in enumerate(self.sets):
            for i in cs.members:
                index.setdefault(i, []).append(k)
        self.per_asset_index = {i: tuple(v) for i, v in index.items()}

    def __eq__(self, other):
        return (
            isinstance(other, CircleFamily)
            and self.radius == other.radius
            and self.sets == other.sets
        )

    def __repr__(self):
        return f"CircleFamily(radius={self.radius}, n_sets={len(self.sets)})"

    def member_sets(self) -> list[tuple[int, ...]]:
        return [cs.members for cs in self.sets]

    def sets_containing(self, asset_id: int) -> tuple[int, ...]:
        return self.per_asset_index.get(asset_id, ())

    def to_json_dict(self) -> dict:
        return {
            "radius": self.radius,
            "sets": [
                {"members": list(cs.members), "center": [cs.center[0], cs.center[1]]}
                for cs in self.sets
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CircleFamily":
        radius = float(data["radius"])
        sets = tuple(
            CircleSet(
                members=tuple(int(m) for m in entry["members"]),
                center=(float(entry["center"][0]), float(entry["center"][1])),
                radius=radius,
            )
            for entry in data["sets"]
        )
        return cls(radius, sets)


def _xy(p) -> tuple[float, float]:
    """Accept a ConnectionPoint or a bare (x, y) pair."""
    if hasattr(p, "x") and hasattr(p, "y"):
        return float(p.x), float(p.y)
    x, y = p
    return float(x), float(y)


def _validate_points(points) -> None:
    if not points:
        raise EmptyInput("point set is empty")
    seen = set()
    for p in points:
        if p.id in seen:
            raise DuplicateId(f"duplicate asset id {p.id}")
        seen.add(p.id)
        if not (math.isfinite(p.x) and math.isfinite(p.y)):
            raise NonFiniteInput(f"non-finite coordinates for asset {p.id}")


def two_circle_centers(p, q, r: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Centers of the two radius-``r`` circles through points ``p`` and ``q``.

    Both centers lie on the perpendicular bisector of the segment, at
    distance ``sqrt(r^2 - (|pq|/2)^2)`` from the midpoint, so each is exactly
    ``r`` away from both points. When the points are one diameter apart the
    two centers coincide at the midpoint.

    Raises ``DegeneratePair`` for coinciding coordinates and ``TooFarApart``
    when the gap exceeds ``2r`` (plus tolerance).
    """
    px, py = _xy(p)
    qx, qy = _xy(q)
    if r <= 0:
        raise ValueError("radius must be positive")
    if px == qx and py == qy:
        raise DegeneratePair(f"points coincide at ({px}, {py})")
    dist = math.hypot(px - qx, py - qy)
    if dist > 2.0 * r + EPS:
        raise TooFarApart(f"points {dist:.6f} m apart exceed diameter {2 * r:.6f} m")
    half = dist / 2.0
    d = math.sqrt(max(r * r - half * half, 0.0))
    mx = (px + qx) / 2.0
    my = (py + qy) / 2.0
    # Unit direction of the bisector: rotate the normalized chord by 90 degrees.
    ux = -(py - qy) / dist
    uy = (px - qx) / dist
    c1 = (mx + d * ux, my + d * uy)
    c2 = (mx - d * ux, my - d * uy)
    return c1, c2


def smallest_enclosing_circle(points) -> tuple[tuple[float, float], float]:
    """Exact smallest circle enclosing all given (x, y) points.

    Randomized incremental construction, expected linear time. The shuffle
    uses a fixed-seed local RNG so results are reproducible bit for bit.
    """
    pts = [_xy(p) for p in points]
    if not pts:
        raise EmptyInput("cannot enclose zero points")
    shuffled = list(pts)
    random.Random(0x5EC).shuffle(shuffled)

    cx, cy, cr = shuffled[0][0], shuffled[0][1], 0.0
    for i, p in enumerate(shuffled):
        if _in_circle(cx, cy, cr, p):
            continue
        cx, cy, cr = p[0], p[1], 0.0
        for j, q in enumerate(shuffled[:i]):
            if _in_circle(cx, cy, cr, q):
                continue
            if cr == 0.0:
                cx, cy, cr = _diameter_circle(p, q)
            else:
                cx, cy, cr = _circle_two_boundary(shuffled[: j + 1], p, q)
    return (cx, cy), cr


_REL_EPS = 1.0 + 1e-14


def _in_circle(cx: float, cy: float, cr: float, p) -> bool:
    return math.hypot(p[0] - cx, p[1] - cy) <= cr * _REL_EPS


def _diameter_circle(a, b) -> tuple[float, float, float]:
    cx = (a[0] + b[0]) / 2.0
    cy = (a[1] + b[1]) / 2.0
    r = max(math.hypot(cx - a[0], cy - a[1]), math.hypot(cx - b[0], cy - b[1]))
    return cx, cy, r


def _circle_two_boundary(points, p, q) -> tuple[float, float, float]:
    """Smallest circle through ``p`` and ``q`` enclosing ``points``."""
    cx, cy, cr = _diameter_circle(p, q)
    left = None
    right = None
    px, py = p
    qx, qy = q
    for s in points:
        if _in_circle(cx, cy, cr, s):
            continue
        cross = _cross(px, py, qx, qy, s[0], s[1])
        circ = _circumcircle(p, q, s)
        if circ is None:
            continue
        ccross = _cross(px, py, qx, qy, circ[0], circ[1])
        if cross > 0.0 and (left is None or ccross > _cross(px, py, qx, qy, left[0], left[1])):
            left = circ
        elif cross < 0.0 and (right is None or ccross < _cross(px, py, qx, qy, right[0], right[1])):
            right = circ
    if left is None and right is None:
        return cx, cy, cr
    if left is None:
        return right
    if right is None:
        return left
    return left if left[2] <= right[2] else right


def _circumcircle(a, b, c):
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2.0
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2.0
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by)) * 2.0
    if d == 0.0:
        return None
    x = ox + ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    y = oy + ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    r = max(
        math.hypot(x - a[0], y - a[1]),
        math.hypot(x - b[0], y - b[1]),
        math.hypot(x - c[0], y - c[1]),
    )
    return x, y, r


def _cross(x0, y0, x1, y1, x2, y2) -> float:
    return (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)


class _GridIndex:
    """Uniform bucket grid for fixed-radius neighbor queries."""

    def __init__(self, points, cell: float):
        self.cell = max(float(cell), 1e-12)
        self.buckets: dict[tuple[int, int], list] = {}
        for p in points:
            key = (math.floor(p.x / self.cell), math.floor(p.y / self.cell))
            self.buckets.setdefault(key, []).append(p)

    def within(self, x: float, y: float, d: float, exclude_id=None) -> list:
        """All points at distance <= d + EPS from (x, y), excluding one id."""
        kx = math.floor(x / self.cell)
        ky = math.floor(y / self.cell)
        reach = int(math.ceil(d / self.cell))
        out = []
        for ix in range(kx - reach, kx + reach + 1):
            for iy in range(ky - reach, ky + reach + 1):
                for p in self.buckets.get((ix, iy), ()):
                    if p.id == exclude_id:
                        continue
                    if math.hypot(p.x - x, p.y - y) <= d + EPS:
                        out.append(p)
        out.sort(key=lambda p: p.id)
        return out


def neighbors_within(points, i: int, d: float) -> set[int]:
    """Ids of all points within distance ``d`` of point ``i`` (excluding it)."""
    if d <= 0:
        raise ValueError("distance must be positive")
    _validate_points(points)
    by_id = {p.id: p for p in points}
    if i not in by_id:
        raise UnknownId(f"unknown asset id {i}")
    center = by_id[i]
    index = _GridIndex(points, cell=d)
    return {p.id for p in index.within(center.x, center.y, d, exclude_id=i)}


def _insert_maximal(collection: list[frozenset], candidate: frozenset) -> None:
    """Keep ``collection`` an antichain: drop the candidate if covered, else
    replace everything it covers."""
    for existing in collection:
        if candidate <= existing:
            return
    collection[:] = [s for s in collection if not s < candidate]
    collection.append(candidate)


def _prune_to_maximal(sorted_tuples: list[tuple[int, ...]]) -> list[tuple[int, ...]]:
    """Drop every member tuple strictly contained in another one."""
    as_sets = [frozenset(t) for t in sorted_tuples]
    return [
        sorted_tuples[k]
        for k, s in enumerate(as_sets)
        if not any(s < t for t in as_sets)
    ]


def build_circle_family(points, radius: float = DEFAULT_RADIUS) -> CircleFamily:
    """Find every maximal group of points enclosable by a radius-``radius`` circle.

    The result is complete (every enclosable group is a subset of some
    returned set), maximal (no returned set contains another), and canonical
    (sets sorted lexicographically by member ids, members ascending). Points
    with no neighbor within one diameter yield singleton sets.

    Coinciding points are ordinary distinct assets sharing a location: they
    always land in the same sets and, when a point has only coinciding
    neighbors, the whole co-located cluster forms one set.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    points = list(points)
    _validate_points(points)

    index = _GridIndex(points, cell=2.0 * radius)
    collected: set[tuple[int, ...]] = set()

    for p in points:
        nbrs = index.within(p.x, p.y, 2.0 * radius, exclude_id=p.id)
        if not nbrs:
            collected.add((p.id,))
            continue
        distinct = [q for q in nbrs if (q.x, q.y) != (p.x, p.y)]
        if not distinct:
            # Only co-located twins nearby: the cluster itself is the set.
            collected.add(tuple(sorted([p.id] + [q.id for q in nbrs])))
            continue
        pool = nbrs + [p]
        local: list[frozenset] = []
        for q in distinct:
            c1, c2 = two_circle_centers(p, q, radius)
            centers = (c1,) if c1 == c2 else (c1, c2)
            for cx, cy in centers:
                members = frozenset(
                    m.id for m in pool if math.hypot(m.x - cx, m.y - cy) <= radius + EPS
                )
                _insert_maximal(local, members)
        collected.update(tuple(sorted(s)) for s in local)

    maximal = _prune_to_maximal(sorted(collected))
    by_id = {p.id: p for p in points}
    sets = []
    for members in maximal:
        center, _ = smallest_enclosing_circle([by_id[m] for m in members])
        sets.append(CircleSet(members=members, center=center, radius=radius))
    return CircleFamily(radius, tuple(sets))


def restrict_family(family: CircleFamily, points, keep_ids) -> CircleFamily:
    """Family of maximal enclosable groups within a subset of the points.

    Intersecting every set with the kept ids and discarding non-maximal
    results gives exactly the family that would be built from the kept
    points alone: any enclosable subgroup lies inside some original set, and
    intersections of enclosable sets stay enclosable. Witness centers are
    recomputed so the result is identical to a fresh build.
    """
    keep = set(keep_ids)
    by_id = {p.id: p for p in points}
    missing = keep - set(by_id)
    if missing:
        raise UnknownId(f"unknown asset ids {sorted(missing)}")
    restricted = {
        tuple(sorted(set(cs.members) & keep)) for cs in family.sets
    } - {()}
    maximal = _prune_to_maximal(sorted(restricted))
    sets = []
    for members in maximal:
        center, _ = smallest_enclosing_circle([by_id[m] for m in members])
        sets.append(CircleSet(members=members, center=center, radius=family.radius))
    return CircleFamily(family.radius, tuple(sets))
