"""Shared verification utilities for the test suite."""
from __future__ import annotations

import numpy as np

from evacsim.engine import SimResult, sample_agents
from evacsim.geometry import polygon_edges, segment_distance


def wall_segments(result: SimResult) -> np.ndarray:
    fp = result.scenario.floorplan
    segs = list(np.asarray(fp.walls, float).reshape(-1, 4))
    for poly in fp.solids():
        segs.extend(polygon_edges(poly))
    return np.asarray(segs, float).reshape(-1, 4)


def check_safety(result: SimResult, tol: float = 1e-9) -> None:
    """Replay the trajectory in event order; after each event the mover must
    clear every still-active agent and every wall segment. Distances are
    recomputed here from raw geometry, not via the engine's kernel."""
    sc = result.scenario
    walls = wall_segments(result)
    agents = sample_agents(sc)
    n = len(agents)
    radii = np.array([a.radius for a in agents])
    positions = np.zeros((n, 2))
    active = np.zeros(n, bool)

    traj = result.trajectory
    rows = np.column_stack([traj.t, traj.agent_id, traj.x, traj.y])

    # initial state: first n rows are t=0 placements
    init = rows[:n]
    assert (init[:, 0] == 0).all()
    ids = init[:, 1].astype(int)
    positions[ids] = init[:, 2:4]
    active[ids] = True
    diffs = positions[:, None, :] - positions[None, :, :]
    dist = np.hypot(diffs[..., 0], diffs[..., 1])
    np.fill_diagonal(dist, np.inf)
    assert (dist >= radii[:, None] + radii[None, :] - tol).all(), "initial overlap"
    wall_d = segment_distance(positions, walls).min(axis=1)
    assert (wall_d >= radii - tol).all(), "initial wall violation"
    for aid in ids:
        if result.arrivals[int(aid)] == 0.0:
            active[aid] = False

    for t, aid_f, x, y in rows[n:]:
        aid = int(aid_f)
        positions[aid] = (x, y)
        p = positions[aid : aid + 1]
        wall_d = float(segment_distance(p, walls).min())
        assert wall_d >= radii[aid] - tol, (t, aid, wall_d, radii[aid])
        others = active.copy()
        others[aid] = False
        if others.any():
            gap = (
                np.hypot(*(positions[others] - positions[aid]).T)
                - radii[others]
                - radii[aid]
            )
            assert gap.min() >= -tol, (t, aid, gap.min())
        if result.arrivals[aid] == t:
            active[aid] = False
