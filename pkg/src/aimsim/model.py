"""Intersection geometry, physical parameters and per-vehicle state records."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from shapely.geometry import LineString, Polygon


class ConfigError(ValueError):
    """Raised for malformed geometry or parameter configuration."""


@dataclass(frozen=True)
class PhysicalParams:
    """Acceleration / velocity bounds and inter-vehicle spacing constants.

    Defaults follow the general simulation parameters used throughout the
    package (60 m branches, 4.3 m vehicles, +-3 m/s^2, 11.11 m/s).
    """

    u_min: float = -3.0
    u_max: float = 3.0
    v_max: float = 11.11
    v_min: float = 0.0
    r: float = 0.2
    length: float = 4.3

    def __post_init__(self):
        if not (self.u_min < 0 < self.u_max):
            raise ConfigError(f"need u_min < 0 < u_max, got {self.u_min}, {self.u_max}")
        if self.v_max <= 0:
            raise ConfigError("v_max must be positive")
        if self.v_min != 0.0:
            raise ConfigError("v_min is fixed at 0")
        if self.r < 0:
            raise ConfigError("robustness distance r must be >= 0")
        if self.length <= 0:
            raise ConfigError("vehicle length must be positive")

    @property
    def brake(self) -> float:
        """Magnitude of the maximum deceleration, |u_min|."""
        return -self.u_min


@dataclass(frozen=True)
class LaneGeometry:
    """Lanes of an isolated intersection and their pairwise compatibility.

    ``paths`` holds one planar polyline per lane; ``polygon`` is the conflict
    region. The compatibility table is derived from the parts of the paths
    that lie inside the polygon, so any layout works as long as the paths are
    supplied.
    """

    lanes: tuple
    approach_length: float
    spans: Mapping
    paths: Mapping
    polygon: tuple
    table: Mapping = field(repr=False)

    @classmethod
    def from_paths(
        cls,
        paths: Mapping[int, Sequence[Sequence[float]]],
        polygon: Sequence[Sequence[float]],
        approach_length: float,
        spans: Mapping[int, float] | None = None,
    ) -> "LaneGeometry":
        if approach_length <= 0:
            raise ConfigError("approach length d must be positive")
        if not paths:
            raise ConfigError("geometry needs at least one lane")
        poly = Polygon(polygon)
        if not poly.is_valid or poly.area <= 0:
            raise ConfigError("intersection polygon is degenerate")
        lanes = tuple(sorted(paths))
        interiors = {}
        for lane in lanes:
            pts = [tuple(map(float, p)) for p in paths[lane]]
            if len(pts) < 2:
                raise ConfigError(f"lane {lane}: path needs at least two points")
            inside = LineString(pts).intersection(poly)
            if inside.is_empty or inside.length <= 0:
                raise ConfigError(f"lane {lane}: path does not cross the intersection")
            interiors[lane] = inside
        resolved = {}
        for lane in lanes:
            s = (spans or {}).get(lane)
            s = float(s) if s is not None else float(interiors[lane].length)
            if s <= 0:
                raise ConfigError(f"lane {lane}: span must be positive")
            resolved[lane] = s
        table = {}
        for a in lanes:
            for b in lanes:
                if a == b or _same_path(paths[a], paths[b]):
                    table[a, b] = -1
                elif interiors[a].intersects(interiors[b]):
                    table[a, b] = 0
                else:
                    table[a, b] = 1
        return cls(
            lanes=lanes,
            approach_length=float(approach_length),
            spans=dict(resolved),
            paths={k: tuple(tuple(map(float, p)) for p in v) for k, v in paths.items()},
            polygon=tuple(tuple(map(float, p)) for p in polygon),
            table=table,
        )

    def compatibility(self, l, m) -> int:
        """Return 1 (disjoint paths), 0 (conflicting) or -1 (same path)."""
        try:
            return self.table[l, m]
        except KeyError:
            raise ConfigError(f"unknown lane pair ({l}, {m})") from None

    def incompatible(self, l, m) -> bool:
        return self.compatibility(l, m) == 0

    def span(self, lane) -> float:
        try:
            return self.spans[lane]
        except KeyError:
            raise ConfigError(f"unknown lane {lane}") from None

    def subset(self, lanes: Iterable) -> "LaneGeometry":
        keep = sorted(set(lanes))
        missing = [l for l in keep if l not in self.spans]
        if missing:
            raise ConfigError(f"unknown lanes {missing}")
        return LaneGeometry.from_paths(
            {l: self.paths[l] for l in keep},
            self.polygon,
            self.approach_length,
            {l: self.spans[l] for l in keep},
        )

    def to_dict(self) -> dict:
        return {
            "approach_length": self.approach_length,
            "intersection": [list(p) for p in self.polygon],
            "lanes": {
                str(l): {"path": [list(p) for p in self.paths[l]], "span": self.spans[l]}
                for l in self.lanes
            },
        }


def _same_path(a, b) -> bool:
    if len(a) != len(b):
        return False
    return all(math.isclose(p, q, abs_tol=1e-9) for u, w in zip(a, b) for p, q in zip(u, w))


def _rotate(points, quarter_turns):
    out = []
    for x, y in points:
        for _ in range(quarter_turns % 4):
            x, y = -y, x
        out.append((round(x, 9), round(y, 9)))
    return out


def _arc(cx, cy, radius, a0, a1, n=24):
    return [
        (cx + radius * math.cos(a0 + (a1 - a0) * i / n), cy + radius * math.sin(a0 + (a1 - a0) * i / n))
        for i in range(n + 1)
    ]


def four_way_geometry(
    lanes: Iterable[int] | None = None,
    approach_length: float = 60.0,
    half_width: float = 10.0,
    tail: float = 60.0,
) -> LaneGeometry:
    """Four-branch intersection with left/straight/right lanes on each branch.

    Lanes are numbered 1..12, three per branch, counter-clockwise starting
    from the southern approach: on each branch the first lane turns left,
    the second goes straight and the third turns right. Straight paths run
    2 * ``half_width`` through the square conflict region.
    """
    h = half_width
    w = h / 6  # incoming lane centres sit at w, 3w, 5w right of the centre line
    xl, xs, xr = w, 3 * w, 5 * w
    south = {
        # left turn: north-bound at x=xl, leaves west-bound at y=xl
        1: [(xl, -h - approach_length)]
        + _arc(-h, -h, h + xl, 0.0, math.pi / 2)
        + [(-h - tail, xl)],
        2: [(xs, -h - approach_length), (xs, -h), (xs, h), (xs, h + tail)],
        # right turn: leaves east-bound at y=-xr
        3: [(xr, -h - approach_length)]
        + _arc(h, -h, h - xr, math.pi, math.pi / 2)
        + [(h + tail, -xr)],
    }
    paths = {}
    for branch in range(4):
        for k, pts in south.items():
            paths[3 * branch + k] = _rotate(pts, branch)
    polygon = [(-h, -h), (h, -h), (h, h), (-h, h)]
    spans = {}
    for lane in paths:
        if lane % 3 == 2:
            spans[lane] = 2 * h
    geo = LaneGeometry.from_paths(paths, polygon, approach_length, spans)
    if lanes is not None:
        geo = geo.subset(lanes)
    return geo


STRAIGHT_LANES = (2, 5, 8, 11)


def default_geometry() -> LaneGeometry:
    """Straight-through lanes {2, 5, 8, 11}: d = 60 m, s_l = 20 m."""
    return four_way_geometry(STRAIGHT_LANES)


def geometry_from_config(block: Mapping) -> LaneGeometry:
    """Build geometry from a config mapping (the ``[geometry]`` table).

    Either ``builtin = "four-way-straight" | "four-way-full"`` or an explicit
    ``intersection`` polygon plus ``lanes.<id>.path`` polylines.
    """
    builtin = block.get("builtin")
    d = float(block.get("approach_length", 60.0))
    if builtin is not None:
        if builtin == "four-way-straight":
            geo = four_way_geometry(STRAIGHT_LANES, approach_length=d)
        elif builtin == "four-way-full":
            geo = four_way_geometry(None, approach_length=d)
        else:
            raise ConfigError(f"unknown builtin geometry {builtin!r}")
        if "lanes" in block and isinstance(block["lanes"], (list, tuple)):
            geo = geo.subset(int(l) for l in block["lanes"])
        return geo
    try:
        polygon = block["intersection"]
        lane_block = block["lanes"]
    except KeyError as exc:
        raise ConfigError(f"geometry block missing {exc}") from None
    paths, spans = {}, {}
    for key, entry in lane_block.items():
        lane = int(key)
        paths[lane] = entry["path"]
        if "span" in entry:
            spans[lane] = entry["span"]
    return LaneGeometry.from_paths(paths, polygon, d, spans)


class Phase(enum.Enum):
    PROVISIONAL = "provisional"
    COORDINATED = "coordinated"


@dataclass
class VehicleState:
    """Snapshot of one vehicle. Positions are measured along the lane path
    from the stop line: -d at arrival, 0 at entry, s_l at exit."""

    id: int
    lane: int
    x: float
    v: float
    t_arrival: float
    t_coord: float
    length: float = 4.3
    phase: Phase = Phase.PROVISIONAL
    t_entry: float | None = None
    t_exit: float | None = None
    last_accel: float = 0.0


def follower(i: VehicleState, j: VehicleState, snapshot: Iterable[VehicleState]) -> int:
    """1 if ``i`` immediately follows ``j`` on the same lane, else 0."""
    if i.lane != j.lane or not i.x < j.x:
        return 0
    for k in snapshot:
        if k.id in (i.id, j.id) or k.lane != i.lane:
            continue
        if i.x < k.x < j.x:
            return 0
    return 1


def predecessor_of(i: VehicleState, snapshot: Iterable[VehicleState]) -> VehicleState | None:
    """The vehicle ``j`` with follower(i, j) == 1, if any."""
    best = None
    for k in snapshot:
        if k.lane == i.lane and k.id != i.id and k.x > i.x:
            if best is None or k.x < best.x:
                best = k
    return best


@dataclass(frozen=True)
class ScheduleEntry:
    """Committed use of the conflict region by one vehicle."""

    vehicle: int
    lane: int
    t_entry: float
    t_exit: float

    def __post_init__(self):
        if not self.t_entry < self.t_exit:
            raise ValueError(f"vehicle {self.vehicle}: entry {self.t_entry} must precede exit {self.t_exit}")
