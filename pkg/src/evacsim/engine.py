"""Deterministic stepwise microscopic evacuation simulator.

Agents occupy circles in continuous space and move in discrete steps: at its
own cadence each agent evaluates a ring of candidate positions and picks the
one maximizing a utility of destination attraction (a precomputed geodesic
floor field) minus exponential repulsions from nearby agents and walls, under
hard non-overlap constraints. Waiting in place is always feasible, so the
scheme cannot deadlock numerically; a simulated-time cap catches layouts that
physically block agents.

One run is single-threaded and bit-reproducible: the event queue is ordered
by (time, agent id) and every random draw comes from a per-agent substream of
the scenario seed (numpy PCG64 seeded via SeedSequence spawn keys), so the
sampling of any agent is independent of iteration order.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from skimage.graph import MCP_Geometric

from .errors import (
    DisconnectedSpace,
    NoDestination,
    OutOfRange,
    PlacementFailure,
    SimulationTimeout,
)
from .floorplan import AGENT_INFLATION, GRID_RESOLUTION, Floorplan, Scenario
from .geometry import (
    points_in_polygon,
    polygon_bounds,
    polygon_centroid,
    segment_distance,
)


@dataclass(frozen=True)
class SimConfig:
    """Model constants. Defaults reproduce the documented variant; every
    value may be overridden per run."""
    speed_sigma: float = 0.26
    speed_floor: float = 0.3
    torso_diameter: tuple[float, float] = (0.42, 0.46)
    stride_factor: float = 0.5        # stride = clamp(factor * speed, min, max)
    stride_min: float = 0.3
    stride_max: float = 1.0
    agent_repulsion_strength: float = 1.0
    agent_repulsion_scale: float = 0.5
    agent_repulsion_cutoff: float = 2.0
    wall_repulsion_strength: float = 0.5
    wall_repulsion_scale: float = 0.3
    wall_repulsion_cutoff: float = 1.0
    ring_candidates: int = 16
    half_ring_candidates: int = 8
    t_max: float = 3600.0
    placement_max_rejects: int = 10000


@dataclass
class Agent:
    id: int
    radius: float
    desired_speed: float
    position: tuple[float, float]
    state: str = "active"


class NavField:
    """Geodesic distance to the nearest destination over a 0.1 m grid,
    computed on free space inflated by the largest torso radius."""

    def __init__(self, values: np.ndarray, resolution: float = GRID_RESOLUTION):
        self.values = values
        self.resolution = resolution

    def value_at(self, points: np.ndarray) -> np.ndarray:
        """Bilinear interpolation of the four surrounding cell values;
        blocked (infinite) cells are excluded and weights renormalized."""
        pts = np.atleast_2d(np.asarray(points, float))
        h = self.resolution
        ny, nx = self.values.shape
        u = pts[:, 0] * (1.0 / h) - 0.5
        v = pts[:, 1] * (1.0 / h) - 0.5
        ix = np.clip(np.floor(u).astype(int), 0, nx - 2)
        iy = np.clip(np.floor(v).astype(int), 0, ny - 2)
        wx = np.clip(u - ix, 0.0, 1.0)
        wy = np.clip(v - iy, 0.0, 1.0)
        V = self.values
        corners = np.empty((4, len(pts)))
        corners[0] = V[iy, ix]
        corners[1] = V[iy, ix + 1]
        corners[2] = V[iy + 1, ix]
        corners[3] = V[iy + 1, ix + 1]
        weights = np.empty((4, len(pts)))
        weights[0] = (1 - wx) * (1 - wy)
        weights[1] = wx * (1 - wy)
        weights[2] = (1 - wx) * wy
        weights[3] = wx * wy
        finite = np.isfinite(corners)
        if finite.all():
            return (weights * corners).sum(axis=0)
        weights[~finite] = 0.0
        norm = weights.sum(axis=0)
        out = np.full(len(pts), np.inf)
        ok = norm > 0
        safe = np.where(finite, corners, 0.0)
        out[ok] = (weights[:, ok] * safe[:, ok]).sum(axis=0) / norm[ok]
        return out


def nav_from_masks(free: np.ndarray, dest: np.ndarray, resolution: float = GRID_RESOLUTION) -> NavField:
    """Multi-source shortest path over the 8-connected grid: orthogonal cost
    h, diagonal h*sqrt(2)."""
    starts = np.argwhere(dest & free)
    if not len(starts):
        raise NoDestination("no free destination cells")
    costs = np.where(free, 1.0, np.inf)
    mcp = MCP_Geometric(costs, fully_connected=True)
    cumulative, _ = mcp.find_costs(starts)
    values = cumulative * resolution
    values[~free] = np.inf
    return NavField(values, resolution)


def compute_nav_field(fp: Floorplan, destinations: tuple[int, ...]) -> NavField:
    if not destinations:
        raise NoDestination("destinations must be non-empty")
    blocked = fp.blocked_mask(inflation=AGENT_INFLATION)
    ny, nx = blocked.shape
    h = GRID_RESOLUTION
    xs = (np.arange(nx) + 0.5) * h
    ys = (np.arange(ny) + 0.5) * h
    dest = np.zeros((ny, nx), bool)
    for exit_idx in destinations:
        poly = fp.exit_zones[exit_idx]
        x0, y0, x1, y1 = polygon_bounds(poly)
        ix = np.nonzero((xs >= x0 - h) & (xs <= x1 + h))[0]
        iy = np.nonzero((ys >= y0 - h) & (ys <= y1 + h))[0]
        if not len(ix) or not len(iy):
            continue
        gx, gy = np.meshgrid(xs[ix], ys[iy])
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        inside = points_in_polygon(pts, poly).reshape(len(iy), len(ix))
        dest[np.ix_(iy, ix)] |= inside
    nav = nav_from_masks(~blocked, dest, h)

    def cell_value(x: float, y: float) -> float:
        ix = min(int(x / h), nx - 1)
        iy = min(int(y / h), ny - 1)
        return float(nav.values[iy, ix])

    for i, room in enumerate(fp.rooms):
        cx, cy = polygon_centroid(room.polygon)
        mx = (room.door[0] + room.door[2]) / 2
        my = (room.door[1] + room.door[3]) / 2
        if not (np.isfinite(cell_value(cx, cy)) or np.isfinite(cell_value(mx, my))):
            raise DisconnectedSpace(f"room {i} cannot reach any selected destination")
    return nav


def _agent_rng(seed: int, agent_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(agent_id,))
    return np.random.Generator(np.random.PCG64(ss))


def sample_speed(rng: np.random.Generator, mean: float, config: SimConfig = SimConfig()) -> float:
    """Truncated normal: resample until the draw clears the floor."""
    if config.speed_sigma == 0:
        return max(mean, config.speed_floor)
    while True:
        v = rng.normal(mean, config.speed_sigma)
        if v >= config.speed_floor:
            return float(v)


def sample_agents(scenario: Scenario, config: SimConfig = SimConfig()) -> list[Agent]:
    """Place agents uniformly at random in their origin rooms, pairwise
    non-overlapping and clear of walls, one RNG substream per agent."""
    fp = scenario.floorplan
    walls = fp.wall_field()
    agents: list[Agent] = []
    placed = np.zeros((scenario.total_agents, 2))
    radii = np.zeros(scenario.total_agents)
    agent_id = 0
    for room_idx, count in scenario.origins:
        poly = fp.rooms[room_idx].polygon
        bx0, by0, bx1, by1 = polygon_bounds(poly)
        for _ in range(count):
            rng = _agent_rng(scenario.seed, agent_id)
            d0, d1 = config.torso_diameter
            radius = rng.uniform(d0, d1) / 2
            speed = sample_speed(rng, scenario.mean_speed, config)
            pos = None
            for _attempt in range(config.placement_max_rejects):
                x = rng.uniform(bx0, bx1)
                y = rng.uniform(by0, by1)
                if not points_in_polygon(np.array([[x, y]]), poly)[0]:
                    continue
                near = walls.segments_near(x, y, radius + 0.01)
                if walls.distance(np.array([[x, y]]), near)[0] < radius:
                    continue
                if agent_id:
                    gap = np.hypot(*(placed[:agent_id] - (x, y)).T) - radii[:agent_id] - radius
                    if gap.min() < 0:
                        continue
                pos = (x, y)
                break
            if pos is None:
                raise PlacementFailure(
                    f"agent {agent_id}: no clear spot in room {room_idx} after "
                    f"{config.placement_max_rejects} attempts"
                )
            placed[agent_id] = pos
            radii[agent_id] = radius
            agents.append(Agent(agent_id, radius, speed, pos))
            agent_id += 1
    return agents


@dataclass
class TrajectoryTable:
    """Rows of (t, agent id, x, y), sorted by (t, agent id)."""
    t: np.ndarray
    agent_id: np.ndarray
    x: np.ndarray
    y: np.ndarray
    _by_agent: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.t)

    def by_agent(self, aid: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self._by_agent:
            order = np.argsort(self.agent_id, kind="stable")
            ids, starts = np.unique(self.agent_id[order], return_index=True)
            bounds = np.append(starts, len(order))
            for k, a in enumerate(ids):
                sel = order[bounds[k] : bounds[k + 1]]
                self._by_agent[int(a)] = (self.t[sel], self.x[sel], self.y[sel])
        return self._by_agent[aid]

    @property
    def agent_ids(self) -> list[int]:
        return sorted(int(a) for a in np.unique(self.agent_id))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("t,agent_id,x,y\n")
            for t, a, x, y in zip(self.t, self.agent_id, self.x, self.y):
                f.write(f"{t:.4f},{int(a)},{x:.4f},{y:.4f}\n")

    @classmethod
    def from_csv(cls, path) -> "TrajectoryTable":
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        data = data.reshape(-1, 4)
        return cls(data[:, 0], data[:, 1].astype(int), data[:, 2], data[:, 3])


@dataclass
class SimResult:
    trajectory: TrajectoryTable
    tet: float
    arrivals: dict[int, float]
    seed: int
    scenario: Scenario


def interpolate(traj: TrajectoryTable, t: float, tet: float | None = None) -> dict[int, tuple[float, float]]:
    """Positions of agents still present at time t (arrival < t excluded)."""
    horizon = tet if tet is not None else float(traj.t.max())
    if not (0.0 <= t <= horizon):
        raise OutOfRange(f"t={t} outside [0, {horizon}]")
    out: dict[int, tuple[float, float]] = {}
    for aid in traj.agent_ids:
        ts, xs, ys = traj.by_agent(aid)
        if ts[-1] < t:
            continue
        out[aid] = (float(np.interp(t, ts, xs)), float(np.interp(t, ts, ys)))
    return out


def _axis_rect(poly) -> tuple[float, float, float, float] | None:
    """Bounds of an axis-aligned 4-vertex polygon, else None."""
    if len(poly) != 4:
        return None
    xs = sorted({p[0] for p in poly})
    ys = sorted({p[1] for p in poly})
    if len(xs) == 2 and len(ys) == 2:
        corners = {(x, y) for x in xs for y in ys}
        if set(map(tuple, poly)) == corners:
            return xs[0], ys[0], xs[1], ys[1]
    return None


class StepKernel:
    """Per-run candidate evaluation; owns the precomputed geometry arrays."""

    def __init__(self, fp: Floorplan, nav: NavField, dest_polys: list, config: SimConfig):
        self.nav = nav
        self.config = config
        self.walls = fp.wall_field()
        self.solid_bounds = [polygon_bounds(p) for p in self.walls.solids]
        # half-open containment matches the even-odd polygon test on rects
        self.dest_rects = [_axis_rect(p) for p in dest_polys]
        self.dest_polys = dest_polys
        angles_full = 2 * np.pi * np.arange(config.ring_candidates) / config.ring_candidates
        angles_half = 2 * np.pi * np.arange(config.half_ring_candidates) / config.half_ring_candidates
        self.unit = np.vstack([
            [[0.0, 0.0]],
            np.column_stack([np.cos(angles_full), np.sin(angles_full)]),
            0.5 * np.column_stack([np.cos(angles_half), np.sin(angles_half)]),
        ])

    def in_destination(self, x: float, y: float) -> bool:
        for rect_bounds, poly in zip(self.dest_rects, self.dest_polys):
            if rect_bounds is not None:
                x0, y0, x1, y1 = rect_bounds
                if x0 <= x < x1 and y0 <= y < y1:
                    return True
            elif points_in_polygon(np.array([[x, y]]), poly)[0]:
                return True
        return False

    def in_destination_mask(self, points: np.ndarray) -> np.ndarray:
        mask = np.zeros(len(points), bool)
        for rect_bounds, poly in zip(self.dest_rects, self.dest_polys):
            if rect_bounds is not None:
                x0, y0, x1, y1 = rect_bounds
                mask |= (
                    (points[:, 0] >= x0) & (points[:, 0] < x1)
                    & (points[:, 1] >= y0) & (points[:, 1] < y1)
                )
            else:
                mask |= points_in_polygon(points, poly)
        return mask

    def _wall_distance(self, cand: np.ndarray, pos: np.ndarray, reach: float) -> np.ndarray:
        walls = self.walls
        near = walls.segments_near(pos[0], pos[1], reach)
        if len(near):
            d = segment_distance(cand, walls.segments[near]).min(axis=1)
        else:
            d = np.full(len(cand), np.inf)
        x, y = pos
        for (bx0, by0, bx1, by1), poly in zip(self.solid_bounds, walls.solids):
            if bx0 - reach <= x <= bx1 + reach and by0 - reach <= y <= by1 + reach:
                d[points_in_polygon(cand, poly)] = 0.0
        outside = (
            (cand[:, 0] < 0)
            | (cand[:, 0] > walls.site_length)
            | (cand[:, 1] < 0)
            | (cand[:, 1] > walls.site_width)
        )
        if outside.any():
            d[outside] = 0.0
        return d

    def choose(
        self,
        pos: np.ndarray,
        radius: float,
        stride: float,
        neighbor_pos: np.ndarray,
        neighbor_radii: np.ndarray,
    ) -> np.ndarray:
        cfg = self.config
        cand = pos + stride * self.unit
        n = len(cand)

        reach = stride + max(cfg.wall_repulsion_cutoff, radius) + 0.05
        wall_d = self._wall_distance(cand, pos, reach)

        feasible = wall_d >= radius
        if len(neighbor_pos):
            dn = np.hypot(
                cand[:, 0:1] - neighbor_pos[None, :, 0],
                cand[:, 1:2] - neighbor_pos[None, :, 1],
            )
            feasible &= (dn >= radius + neighbor_radii[None, :]).all(axis=1)
            contrib = np.where(
                dn < cfg.agent_repulsion_cutoff,
                -cfg.agent_repulsion_strength * np.exp(-dn / cfg.agent_repulsion_scale),
                0.0,
            )
            repulsion = contrib.sum(axis=1)
        else:
            repulsion = np.zeros(n)
        feasible[0] = True  # waiting is always allowed

        d = self.nav.value_at(cand)
        wall_pen = np.where(
            wall_d < cfg.wall_repulsion_cutoff,
            -cfg.wall_repulsion_strength * np.exp(-wall_d / cfg.wall_repulsion_scale),
            0.0,
        )
        # a destination zone is an open egress: walls beyond the threshold do
        # not repel (the hard clearance constraint still applies), so entering
        # always beats hovering at the zone edge
        wall_pen[self.in_destination_mask(cand)] = 0.0
        utility = -d + repulsion + wall_pen

        best = 0
        for k in range(n):
            if not feasible[k] or k == best:
                continue
            if utility[k] > utility[best] or (
                utility[k] == utility[best] and d[k] < d[best]
            ):
                best = k
        return cand[best]


def run(scenario: Scenario, config: SimConfig = SimConfig(), nav_field: NavField | None = None) -> SimResult:
    """Simulate a scenario to completion, producing the trajectory table and
    total evacuation time."""
    fp = scenario.floorplan
    nav = nav_field if nav_field is not None else compute_nav_field(fp, scenario.destinations)
    dest_polys = [fp.exit_zones[i] for i in scenario.destinations]
    kernel = StepKernel(fp, nav, dest_polys, config)

    agents = sample_agents(scenario, config)
    n = len(agents)
    positions = np.array([a.position for a in agents])
    radii = np.array([a.radius for a in agents])
    speeds = np.array([a.desired_speed for a in agents])
    strides = np.clip(config.stride_factor * speeds, config.stride_min, config.stride_max)
    periods = strides / speeds
    active = np.ones(n, bool)
    arrivals: dict[int, float] = {}

    # spatial hash over repulsion-cutoff cells
    cell = config.agent_repulsion_cutoff
    buckets: dict[tuple[int, int], list[int]] = {}

    def bucket_of(p) -> tuple[int, int]:
        return int(np.floor(p[0] / cell)), int(np.floor(p[1] / cell))

    def neighbors_of(i: int) -> list[int]:
        bx, by = bucket_of(positions[i])
        found: list[int] = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                found.extend(buckets.get((bx + dx, by + dy), ()))
        return sorted(a for a in found if a != i)

    rows_t: list[float] = []
    rows_id: list[int] = []
    rows_x: list[float] = []
    rows_y: list[float] = []

    heap: list[tuple[float, int]] = []
    for i in range(n):
        rows_t.append(0.0)
        rows_id.append(i)
        rows_x.append(positions[i, 0])
        rows_y.append(positions[i, 1])
        if kernel.in_destination(positions[i, 0], positions[i, 1]):
            arrivals[i] = 0.0
            active[i] = False
        else:
            buckets.setdefault(bucket_of(positions[i]), []).append(i)
            heap.append((periods[i], i))
    heapq.heapify(heap)

    while heap:
        t, i = heapq.heappop(heap)
        if t > config.t_max:
            raise SimulationTimeout(f"simulation exceeded t_max={config.t_max} s")
        nb = neighbors_of(i)
        new = kernel.choose(positions[i], radii[i], strides[i], positions[nb], radii[nb])
        old_bucket = bucket_of(positions[i])
        positions[i] = new
        rows_t.append(t)
        rows_id.append(i)
        rows_x.append(new[0])
        rows_y.append(new[1])
        if kernel.in_destination(new[0], new[1]):
            arrivals[i] = t
            active[i] = False
            buckets[old_bucket].remove(i)
        else:
            nb_bucket = bucket_of(new)
            if nb_bucket != old_bucket:
                buckets[old_bucket].remove(i)
                buckets.setdefault(nb_bucket, []).append(i)
            heapq.heappush(heap, (t + periods[i], i))

    traj = TrajectoryTable(
        np.array(rows_t), np.array(rows_id, int), np.array(rows_x), np.array(rows_y)
    )
    tet = max(arrivals.values())
    return SimResult(traj, tet, arrivals, scenario.seed, scenario)


__all__ = [
    "SimConfig", "Agent", "NavField", "TrajectoryTable", "SimResult",
    "compute_nav_field", "nav_from_masks", "sample_agents", "sample_speed",
    "interpolate", "run", "StepKernel",
]
