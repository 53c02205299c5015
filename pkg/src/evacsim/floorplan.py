"""Parametric office-building floorplans and scenario enumeration.

Three archetypes share a common construction: a main horizontal corridor
spanning the site, room strips opening onto it through 1.0 m doors, and
exit zones at the open corridor ends.

  A: straight corridor, rooms above and below, exits at both ends.
  B: T-shape; a vertical stem drops from the corridor middle to the bottom
     edge, exits at both bar ends and the stem bottom.
  C: L-shape; the stem drops at the right end, exits at the bar's left end
     and the stem bottom.

Optional features: a bottleneck narrows each exit approach to a 1.0 m gap;
obstacles are 0.8 m square columns at the corridor third-points.

Each archetype has 12 fixed versions crossing {short, long} footprints,
{narrow, wide} corridors and {plain, bottleneck, obstacles} variants.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from .errors import InfeasibleParams, InvalidScenario
from .geometry import (
    Segment,
    Vertices,
    WallField,
    occupancy_grid,
    polygon_area,
    polygon_centroid,
    rect,
)

MIN_ROOM_DEPTH = 2.0
MIN_ROOM_WIDTH = 1.2
DOOR_WIDTH = 1.0
EXIT_DEPTH = 1.0
BOTTLENECK_GAP = 1.0
BOTTLENECK_THICKNESS = 0.2
BOTTLENECK_OFFSET = 1.2     # slab start, measured from the site edge behind the exit
OBSTACLE_SIDE = 0.8
AGENT_INFLATION = 0.23      # largest torso radius
GRID_RESOLUTION = 0.1

DEFAULT_AGENT_COUNTS = (10, 20, 30)
DEFAULT_MEAN_SPEEDS = (1.0, 1.34, 2.0)
ORIGIN_SCHEMES = ("all", "half", "farthest")
DESTINATION_SCHEMES = ("each", "all")


class Archetype(str, Enum):
    A = "A"
    B = "B"
    C = "C"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


@dataclass(frozen=True)
class GeometryParams:
    archetype: Archetype
    length: float
    width: float
    corridor_width: float
    num_rooms: int
    has_bottleneck: bool = False
    has_obstacles: bool = False


@dataclass(frozen=True)
class Room:
    polygon: Vertices
    door: Segment


@dataclass(frozen=True)
class Floorplan:
    site_length: float
    site_width: float
    walls: tuple[Segment, ...]
    obstacles: tuple[Vertices, ...]
    rooms: tuple[Room, ...]
    exit_zones: tuple[Vertices, ...]
    bottleneck: tuple[Vertices, ...] = ()

    def solids(self) -> list[Vertices]:
        return list(self.obstacles) + list(self.bottleneck)

    def wall_field(self) -> WallField:
        return WallField(list(self.walls), self.solids(), self.site_length, self.site_width)

    def blocked_mask(self, inflation: float = 0.0, resolution: float = GRID_RESOLUTION) -> np.ndarray:
        return occupancy_grid(
            self.site_length, self.site_width, list(self.walls), self.solids(),
            resolution=resolution, inflation=inflation,
        )


@dataclass(frozen=True)
class Scenario:
    floorplan: Floorplan
    origins: tuple[tuple[int, int], ...]     # (room index, agent count)
    destinations: tuple[int, ...]            # exit zone indices
    mean_speed: float
    seed: int

    def __post_init__(self):
        if not self.origins:
            raise InvalidScenario("origins must be non-empty")
        if not self.destinations:
            raise InvalidScenario("destinations must be non-empty")
        if self.mean_speed <= 0:
            raise InvalidScenario("mean_speed must be > 0")
        for room_idx, count in self.origins:
            if count < 1:
                raise InvalidScenario(f"agent_count must be >= 1, got {count}")
            if not 0 <= room_idx < len(self.floorplan.rooms):
                raise InvalidScenario(f"origin room index {room_idx} out of range")
            area = polygon_area(self.floorplan.rooms[room_idx].polygon)
            if area < count * 0.25:
                raise InvalidScenario(
                    f"room {room_idx} area {area:.2f} m^2 too small for {count} agents"
                )
        for exit_idx in self.destinations:
            if not 0 <= exit_idx < len(self.floorplan.exit_zones):
                raise InvalidScenario(f"destination exit index {exit_idx} out of range")

    @property
    def total_agents(self) -> int:
        return sum(count for _, count in self.origins)


@dataclass(frozen=True)
class SweepConfig:
    """Controls scenario enumeration for one floorplan."""
    agent_counts: tuple[int, ...] = DEFAULT_AGENT_COUNTS
    mean_speeds: tuple[float, ...] = DEFAULT_MEAN_SPEEDS
    origin_schemes: tuple[str, ...] = ORIGIN_SCHEMES
    destination_schemes: tuple[str, ...] = DESTINATION_SCHEMES
    base_seed: int = 0


@dataclass
class ConnectivityReport:
    pairs: list[tuple[int, int, bool]] = field(default_factory=list)  # (room, exit, reachable)

    @property
    def all_reachable(self) -> bool:
        return all(ok for _, _, ok in self.pairs)


def _room_walls(x0: float, y0: float, x1: float, y1: float, door_edge: str) -> tuple[list[Segment], Segment]:
    """Perimeter segments with a centered door gap on one edge."""
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    half = DOOR_WIDTH / 2
    walls: list[Segment] = []
    if door_edge == "bottom":
        door = (cx - half, y0, cx + half, y0)
        walls += [(x0, y0, cx - half, y0), (cx + half, y0, x1, y0), (x0, y1, x1, y1)]
    elif door_edge == "top":
        door = (cx - half, y1, cx + half, y1)
        walls += [(x0, y1, cx - half, y1), (cx + half, y1, x1, y1), (x0, y0, x1, y0)]
    else:
        raise ValueError(door_edge)
    walls += [(x0, y0, x0, y1), (x1, y0, x1, y1)]
    return walls, door


def _split_strip(x0: float, x1: float, count: int) -> list[tuple[float, float]]:
    edges = np.linspace(x0, x1, count + 1)
    return [(float(edges[i]), float(edges[i + 1])) for i in range(count)]


def _bottleneck_slabs(axis: str, span: tuple[float, float], site_edge: float) -> list[Vertices]:
    """Two slabs narrowing the corridor to BOTTLENECK_GAP just behind an exit.

    axis "x": exit on a vertical site edge, slabs block in y over an x-range.
    """
    lo, hi = span
    mid = (lo + hi) / 2
    g = BOTTLENECK_GAP / 2
    if axis == "x":
        x0 = BOTTLENECK_OFFSET if site_edge == 0.0 else site_edge - BOTTLENECK_OFFSET - BOTTLENECK_THICKNESS
        x1 = x0 + BOTTLENECK_THICKNESS
        return [rect(x0, lo, x1, mid - g), rect(x0, mid + g, x1, hi)]
    y0 = BOTTLENECK_OFFSET if site_edge == 0.0 else site_edge - BOTTLENECK_OFFSET - BOTTLENECK_THICKNESS
    y1 = y0 + BOTTLENECK_THICKNESS
    return [rect(lo, y0, mid - g, y1), rect(mid + g, y0, hi, y1)]


def build_floorplan(params: GeometryParams) -> Floorplan:
    """Construct one archetype instance; raises InfeasibleParams naming the
    violated constraint."""
    L, W, c = params.length, params.width, params.corridor_width
    n = params.num_rooms
    if not (4 <= L <= 64):
        raise InfeasibleParams(f"length {L} outside [4, 64]")
    if not (4 <= W <= 64):
        raise InfeasibleParams(f"width {W} outside [4, 64]")
    if not (0 < c < W - 2 * MIN_ROOM_DEPTH):
        raise InfeasibleParams(
            f"corridor_width {c} not in (0, width - 2*{MIN_ROOM_DEPTH}) = (0, {W - 2 * MIN_ROOM_DEPTH})"
        )
    if n < 1:
        raise InfeasibleParams(f"num_rooms {n} must be >= 1")
    if params.has_obstacles and c < OBSTACLE_SIDE + 2.0:
        raise InfeasibleParams(
            f"corridor_width {c} leaves < 1.0 m beside a {OBSTACLE_SIDE} m obstacle"
        )

    cor_y0, cor_y1 = (W - c) / 2, (W + c) / 2
    walls: list[Segment] = [(0, 0, L, 0), (L, 0, L, W), (0, W, L, W), (0, 0, 0, W)]
    rooms: list[Room] = []
    exit_zones: list[Vertices] = []
    bottleneck: list[Vertices] = []
    obstacles: list[Vertices] = []

    n_top = (n + 1) // 2
    n_bottom = n - n_top

    def add_rooms(spans: list[tuple[float, float]], y0: float, y1: float, door_edge: str):
        for x0, x1 in spans:
            if x1 - x0 < MIN_ROOM_WIDTH:
                raise InfeasibleParams(
                    f"room width {x1 - x0:.3f} m below minimum {MIN_ROOM_WIDTH} m"
                )
            segs, door = _room_walls(x0, y0, x1, y1, door_edge)
            walls.extend(segs)
            rooms.append(Room(rect(x0, y0, x1, y1), door))

    # top strip is identical for all archetypes
    add_rooms(_split_strip(0, L, n_top), cor_y1, W, "bottom")

    if params.archetype is Archetype.A:
        if n_bottom:
            add_rooms(_split_strip(0, L, n_bottom), 0, cor_y0, "top")
        exit_zones = [rect(0, cor_y0, EXIT_DEPTH, cor_y1), rect(L - EXIT_DEPTH, cor_y0, L, cor_y1)]
        if params.has_bottleneck:
            bottleneck += _bottleneck_slabs("x", (cor_y0, cor_y1), 0.0)
            bottleneck += _bottleneck_slabs("x", (cor_y0, cor_y1), L)
    elif params.archetype is Archetype.B:
        stem_x0, stem_x1 = (L - c) / 2, (L + c) / 2
        if n_bottom:
            if stem_x0 < MIN_ROOM_WIDTH or L - stem_x1 < MIN_ROOM_WIDTH:
                raise InfeasibleParams("stem leaves no room beside it")
            n_left = (n_bottom + 1) // 2
            n_right = n_bottom - n_left
            add_rooms(_split_strip(0, stem_x0, n_left), 0, cor_y0, "top")
            if n_right:
                add_rooms(_split_strip(stem_x1, L, n_right), 0, cor_y0, "top")
        exit_zones = [
            rect(0, cor_y0, EXIT_DEPTH, cor_y1),
            rect(L - EXIT_DEPTH, cor_y0, L, cor_y1),
            rect(stem_x0, 0, stem_x1, EXIT_DEPTH),
        ]
        if params.has_bottleneck:
            bottleneck += _bottleneck_slabs("x", (cor_y0, cor_y1), 0.0)
            bottleneck += _bottleneck_slabs("x", (cor_y0, cor_y1), L)
            bottleneck += _bottleneck_slabs("y", (stem_x0, stem_x1), 0.0)
    elif params.archetype is Archetype.C:
        stem_x0, stem_x1 = L - c, L
        if n_bottom:
            if stem_x0 < MIN_ROOM_WIDTH:
                raise InfeasibleParams("stem leaves no room beside it")
            add_rooms(_split_strip(0, stem_x0, n_bottom), 0, cor_y0, "top")
        exit_zones = [
            rect(0, cor_y0, EXIT_DEPTH, cor_y1),
            rect(stem_x0, 0, stem_x1, EXIT_DEPTH),
        ]
        if params.has_bottleneck:
            bottleneck += _bottleneck_slabs("x", (cor_y0, cor_y1), 0.0)
            bottleneck += _bottleneck_slabs("y", (stem_x0, stem_x1), 0.0)
    else:  # pragma: no cover - exhaustive enum
        raise InfeasibleParams(f"unknown archetype {params.archetype}")

    if params.has_obstacles:
        half = OBSTACLE_SIDE / 2
        yc = W / 2
        for xc in (L / 3, 2 * L / 3):
            obstacles.append(rect(xc - half, yc - half, xc + half, yc + half))

    return Floorplan(
        site_length=float(L),
        site_width=float(W),
        walls=tuple(walls),
        obstacles=tuple(obstacles),
        rooms=tuple(rooms),
        exit_zones=tuple(exit_zones),
        bottleneck=tuple(bottleneck),
    )


# (length, width, corridor, rooms, bottleneck, obstacles); order is
# {short, long} x {narrow, wide} x {plain, bottleneck, obstacles}
VERSION_TABLE: tuple[tuple[float, float, float, int, bool, bool], ...] = (
    (20.0, 12.0, 3.0, 4, False, False),
    (20.0, 12.0, 3.0, 4, True, False),
    (20.0, 12.0, 3.0, 4, False, True),
    (20.0, 12.0, 5.0, 4, False, False),
    (20.0, 12.0, 5.0, 4, True, False),
    (20.0, 12.0, 5.0, 4, False, True),
    (32.0, 16.0, 3.0, 6, False, False),
    (32.0, 16.0, 3.0, 6, True, False),
    (32.0, 16.0, 3.0, 6, False, True),
    (32.0, 16.0, 5.0, 6, False, False),
    (32.0, 16.0, 5.0, 6, True, False),
    (32.0, 16.0, 5.0, 6, False, True),
)


def enumerate_versions(archetype: Archetype | str) -> list[GeometryParams]:
    """The fixed 12-version table for one archetype, deterministic order."""
    arch = Archetype(archetype)
    return [
        GeometryParams(arch, length, width, corridor, rooms, bneck, obst)
        for length, width, corridor, rooms, bneck, obst in VERSION_TABLE
    ]


def enumerate_geometries() -> list[tuple[str, GeometryParams]]:
    """All 36 (geometry id, params) pairs: 3 archetypes x 12 versions."""
    out = []
    for arch in Archetype:
        for i, params in enumerate(enumerate_versions(arch)):
            out.append((f"{arch.value}-{i:02d}", params))
    return out


def scenario_seed(base_seed: int, index: int) -> int:
    """Deterministic per-scenario 64-bit seed from a base seed and index."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _farthest_room(fp: Floorplan) -> int:
    """Room whose door midpoint is Euclidean-farthest from the nearest exit
    centroid; ties resolve to the lowest index."""
    exits = [polygon_centroid(z) for z in fp.exit_zones]
    best, best_d = 0, -1.0
    for i, room in enumerate(fp.rooms):
        mx = (room.door[0] + room.door[2]) / 2
        my = (room.door[1] + room.door[3]) / 2
        d = min(np.hypot(mx - ex, my - ey) for ex, ey in exits)
        if d > best_d:
            best, best_d = i, d
    return best


def origin_rooms(fp: Floorplan, scheme: str) -> list[int]:
    n = len(fp.rooms)
    if scheme == "all":
        return list(range(n))
    if scheme == "half":
        return list(range((n + 1) // 2))
    if scheme == "farthest":
        return [_farthest_room(fp)]
    raise ValueError(f"unknown origin scheme {scheme!r}")


def destination_choices(fp: Floorplan, schemes: tuple[str, ...]) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []
    if "each" in schemes:
        out.extend((i,) for i in range(len(fp.exit_zones)))
    if "all" in schemes:
        out.append(tuple(range(len(fp.exit_zones))))
    return out


def enumerate_scenarios(fp: Floorplan, sweep: SweepConfig) -> list[Scenario]:
    """Cross product of origin scheme x destination choice x agents x speed,
    in that nesting order; seeds derive from the base seed and position."""
    scenarios = []
    index = 0
    for scheme in sweep.origin_schemes:
        rooms = origin_rooms(fp, scheme)
        for dests in destination_choices(fp, sweep.destination_schemes):
            for count in sweep.agent_counts:
                for speed in sweep.mean_speeds:
                    scenarios.append(Scenario(
                        floorplan=fp,
                        origins=tuple((r, count) for r in rooms),
                        destinations=dests,
                        mean_speed=speed,
                        seed=scenario_seed(sweep.base_seed, index),
                    ))
                    index += 1
    return scenarios


def validate_connectivity(fp: Floorplan) -> ConnectivityReport:
    """Flood-fill reachability of every (room door, exit zone) pair on the
    0.1 m occupancy grid inflated by the agent radius."""
    blocked = fp.blocked_mask(inflation=AGENT_INFLATION)
    labels, _ = ndimage.label(~blocked, structure=np.ones((3, 3), int))

    def label_at(x: float, y: float) -> int:
        ix = min(int(x / GRID_RESOLUTION), labels.shape[1] - 1)
        iy = min(int(y / GRID_RESOLUTION), labels.shape[0] - 1)
        return int(labels[iy, ix])

    report = ConnectivityReport()
    for ri, room in enumerate(fp.rooms):
        mx = (room.door[0] + room.door[2]) / 2
        my = (room.door[1] + room.door[3]) / 2
        door_label = label_at(mx, my)
        for ei, zone in enumerate(fp.exit_zones):
            ex, ey = polygon_centroid(zone)
            reachable = door_label != 0 and door_label == label_at(ex, ey)
            report.pairs.append((ri, ei, reachable))
    return report


# ---------------------------------------------------------------------------
# Plain-text serialization (versioned, 6-decimal fixed precision)
# ---------------------------------------------------------------------------

FLOORPLAN_FORMAT_VERSION = 1


def _fmt(*values: float) -> str:
    return " ".join(f"{v:.6f}" for v in values)


def _poly_line(poly: Vertices) -> str:
    return f"{len(poly)} " + " ".join(_fmt(x, y) for x, y in poly)


def floorplan_to_text(fp: Floorplan) -> str:
    lines = [f"evacplan {FLOORPLAN_FORMAT_VERSION}", f"site {_fmt(fp.site_length, fp.site_width)}"]
    for seg in fp.walls:
        lines.append(f"wall {_fmt(*seg)}")
    for poly in fp.obstacles:
        lines.append(f"obstacle {_poly_line(poly)}")
    for room in fp.rooms:
        lines.append(f"room {_poly_line(room.polygon)} door {_fmt(*room.door)}")
    for zone in fp.exit_zones:
        lines.append(f"exit {_poly_line(zone)}")
    for poly in fp.bottleneck:
        lines.append(f"bottleneck {_poly_line(poly)}")
    return "\n".join(lines) + "\n"


def _parse_poly(tokens: list[str]) -> tuple[Vertices, list[str]]:
    n = int(tokens[0])
    coords = [float(t) for t in tokens[1 : 1 + 2 * n]]
    poly = tuple((coords[2 * i], coords[2 * i + 1]) for i in range(n))
    return poly, tokens[1 + 2 * n :]


def floorplan_from_text(text: str) -> Floorplan:
    from .errors import FormatError

    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "evacplan" or int(head[1]) != FLOORPLAN_FORMAT_VERSION:
        raise FormatError(f"unsupported floorplan header {lines[0]!r}")
    site = lines[1].split()
    L, W = float(site[1]), float(site[2])
    walls: list[Segment] = []
    obstacles: list[Vertices] = []
    rooms: list[Room] = []
    exits: list[Vertices] = []
    bneck: list[Vertices] = []
    for ln in lines[2:]:
        kind, *tokens = ln.split()
        if kind == "wall":
            walls.append(tuple(float(t) for t in tokens))
        elif kind == "obstacle":
            obstacles.append(_parse_poly(tokens)[0])
        elif kind == "room":
            poly, rest = _parse_poly(tokens)
            if rest[0] != "door":
                raise FormatError(f"room line missing door: {ln!r}")
            rooms.append(Room(poly, tuple(float(t) for t in rest[1:5])))
        elif kind == "exit":
            exits.append(_parse_poly(tokens)[0])
        elif kind == "bottleneck":
            bneck.append(_parse_poly(tokens)[0])
        else:
            raise FormatError(f"unknown record {kind!r}")
    return Floorplan(L, W, tuple(walls), tuple(obstacles), tuple(rooms), tuple(exits), tuple(bneck))


__all__ = [
    "Archetype", "GeometryParams", "Room", "Floorplan", "Scenario", "SweepConfig",
    "ConnectivityReport", "build_floorplan", "enumerate_versions", "enumerate_geometries",
    "enumerate_scenarios", "origin_rooms", "destination_choices", "scenario_seed",
    "validate_connectivity", "floorplan_to_text", "floorplan_from_text",
    "DEFAULT_AGENT_COUNTS", "DEFAULT_MEAN_SPEEDS", "VERSION_TABLE",
]
