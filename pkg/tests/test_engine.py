from __future__ import annotations

import heapq

import numpy as np
import pytest

from evacsim.engine import (
    NavField,
    SimConfig,
    TrajectoryTable,
    StepKernel,
    compute_nav_field,
    interpolate,
    nav_from_masks,
    run,
    sample_agents,
    sample_speed,
)
from evacsim.errors import NoDestination, OutOfRange, PlacementFailure, SimulationTimeout
from evacsim.floorplan import Scenario


def reference_dijkstra(free: np.ndarray, dest: np.ndarray, h: float = 0.1) -> np.ndarray:
    """Plain heapq Dijkstra over the 8-connected grid, independent of the
    production path."""
    ny, nx = free.shape
    dist = np.full((ny, nx), np.inf)
    heap = []
    for iy, ix in np.argwhere(dest & free):
        dist[iy, ix] = 0.0
        heap.append((0.0, int(iy), int(ix)))
    heapq.heapify(heap)
    while heap:
        d, iy, ix = heapq.heappop(heap)
        if d > dist[iy, ix]:
            continue
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                qy, qx = iy + dy, ix + dx
                if not (0 <= qy < ny and 0 <= qx < nx) or not free[qy, qx]:
                    continue
                step = h * (np.sqrt(2.0) if dx and dy else 1.0)
                nd = d + step
                if nd < dist[qy, qx] - 1e-15:
                    dist[qy, qx] = nd
                    heapq.heappush(heap, (nd, qy, qx))
    return dist


class TestNavField:
    def test_destination_cell_is_zero(self):
        free = np.ones((5, 5), bool)
        dest = np.zeros((5, 5), bool)
        dest[2, 2] = True
        nav = nav_from_masks(free, dest)
        assert nav.values[2, 2] == 0.0

    def test_three_by_three_hand_dijkstra(self):
        free = np.ones((3, 3), bool)
        dest = np.zeros((3, 3), bool)
        dest[1, 1] = True
        nav = nav_from_masks(free, dest)
        assert nav.values[1, 0] == pytest.approx(0.1, abs=1e-12)
        assert nav.values[0, 1] == pytest.approx(0.1, abs=1e-12)
        assert nav.values[0, 0] == pytest.approx(0.1 * np.sqrt(2), abs=1e-9)
        assert nav.values[2, 2] == pytest.approx(0.1 * np.sqrt(2), abs=1e-9)

    def test_matches_reference_dijkstra_on_random_maze(self, rng):
        free = rng.random((40, 60)) > 0.25
        dest = np.zeros_like(free)
        dest[5, 5] = True
        free[5, 5] = True
        nav = nav_from_masks(free, dest)
        ref = reference_dijkstra(free, dest)
        both = np.isfinite(nav.values) & np.isfinite(ref)
        assert (np.isfinite(nav.values) == np.isfinite(ref)).all()
        assert np.abs(nav.values[both] - ref[both]).max() < 1e-9

    def test_straight_corridor_geodesic_within_octile_bound(self, corridor_fp):
        nav = compute_nav_field(corridor_fp, (0,))
        # far end of the open corridor, on the centerline
        d = float(nav.value_at(np.array([[21.0, 2.0]]))[0])
        analytic = 21.0 - 1.0  # to the zone's inner edge
        assert d == pytest.approx(analytic, rel=0.02, abs=0.15)

    def test_metric_consistency_between_neighbors(self, fp_small):
        nav = compute_nav_field(fp_small, (0, 1))
        v = nav.values
        for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
            a = v[max(0, dy) : v.shape[0] + min(0, dy), max(0, dx) : v.shape[1] + min(0, dx)]
            b = v[max(0, -dy) : v.shape[0] + min(0, -dy), max(0, -dx) : v.shape[1] + min(0, -dx)]
            both = np.isfinite(a) & np.isfinite(b)
            cost = 0.1 * (np.sqrt(2) if dx and dy else 1.0)
            assert (np.abs(a[both] - b[both]) <= cost + 1e-9).all()

    def test_no_destination_raises(self, fp_small):
        with pytest.raises(NoDestination):
            compute_nav_field(fp_small, ())
        free = np.ones((4, 4), bool)
        dest = np.zeros((4, 4), bool)
        with pytest.raises(NoDestination):
            nav_from_masks(free, dest)

    def test_disconnected_space_raises(self, corridor_fp):
        from evacsim.errors import DisconnectedSpace
        from evacsim.floorplan import Floorplan

        # seal the corridor between the room and the exit
        sealed = Floorplan(
            corridor_fp.site_length, corridor_fp.site_width,
            corridor_fp.walls + ((10.0, 0.0, 10.0, corridor_fp.site_width),),
            corridor_fp.obstacles, corridor_fp.rooms, corridor_fp.exit_zones,
        )
        with pytest.raises(DisconnectedSpace):
            compute_nav_field(sealed, (0,))

    def test_bilinear_excludes_blocked_cells(self):
        values = np.array([[0.0, np.inf], [1.0, 2.0]])
        nav = NavField(values, resolution=1.0)
        # center of the four cells: inf corner dropped, others renormalized
        v = float(nav.value_at(np.array([[1.0, 1.0]]))[0])
        assert np.isfinite(v)
        assert v == pytest.approx((0.0 + 1.0 + 2.0) / 3)


class TestSampleAgents:
    def test_counts_and_ids(self, fp_small):
        sc = Scenario(fp_small, ((0, 30), (1, 30), (2, 30)), (0,), 1.34, seed=5)
        agents = sample_agents(sc)
        assert len(agents) == 90
        assert [a.id for a in agents] == list(range(90))

    def test_same_seed_identical(self, fp_small):
        sc = Scenario(fp_small, ((0, 10),), (0,), 1.34, seed=9)
        a = sample_agents(sc)
        b = sample_agents(sc)
        assert [(x.position, x.radius, x.desired_speed) for x in a] == [
            (x.position, x.radius, x.desired_speed) for x in b
        ]

    def test_radii_within_torso_bounds(self, fp_small):
        sc = Scenario(fp_small, ((0, 30),), (0,), 1.34, seed=2)
        for agent in sample_agents(sc):
            assert 0.21 <= agent.radius <= 0.23

    def test_no_overlap_and_wall_clearance(self, fp_small):
        sc = Scenario(fp_small, ((0, 30), (1, 30)), (0,), 1.0, seed=3)
        agents = sample_agents(sc)
        pos = np.array([a.position for a in agents])
        rad = np.array([a.radius for a in agents])
        for i in range(len(agents)):
            d = np.hypot(*(pos - pos[i]).T)
            d[i] = np.inf
            assert (d >= rad + rad[i] - 1e-9).all()
        walls = sc.floorplan.wall_field()
        assert (walls.distance(pos) >= rad - 1e-9).all()

    def test_truncated_normal_mean(self):
        rng = np.random.default_rng(77)
        draws = [sample_speed(rng, 1.34) for _ in range(10000)]
        assert abs(np.mean(draws) - 1.34) < 0.01
        assert min(draws) >= 0.3

    def test_speed_floor_enforced(self):
        rng = np.random.default_rng(8)
        draws = [sample_speed(rng, 0.4) for _ in range(2000)]
        assert min(draws) >= 0.3

    def test_placement_failure_when_room_too_crowded(self, fp_small):
        # bypass Scenario's area check with a directly-constructed object
        sc = Scenario(fp_small, ((0, 40),), (0,), 1.0, seed=1)
        object.__setattr__(sc, "origins", ((0, 400),))
        with pytest.raises(PlacementFailure):
            sample_agents(sc)


@pytest.fixture(scope="session")
def open_kernel(open_fp):
    nav = compute_nav_field(open_fp, (0,))
    return StepKernel(open_fp, nav, [open_fp.exit_zones[0]], SimConfig())


class TestStepAgent:

    def test_lone_agent_strictly_decreases_distance(self, open_kernel):
        pos = np.array([15.0, 10.0])
        d0 = float(open_kernel.nav.value_at(pos[None])[0])
        new = open_kernel.choose(pos, 0.22, 0.5, np.zeros((0, 2)), np.zeros(0))
        d1 = float(open_kernel.nav.value_at(new[None])[0])
        assert d1 < d0

    def test_fully_enclosed_agent_waits(self, open_kernel):
        pos = np.array([15.0, 10.0])
        ring = 12
        angles = 2 * np.pi * np.arange(ring) / ring
        neighbors = pos + 0.6 * np.column_stack([np.cos(angles), np.sin(angles)])
        new = open_kernel.choose(pos, 0.22, 0.5, neighbors, np.full(ring, 0.23))
        assert np.allclose(new, pos)

    def test_pair_keeps_separation(self, open_kernel):
        a = np.array([15.0, 10.0])
        b = np.array([15.0, 10.5])
        ra = rb = 0.22
        new_a = open_kernel.choose(a, ra, 0.5, b[None], np.array([rb]))
        assert np.hypot(*(new_a - b)) >= ra + rb - 1e-9
        # and exhaustively: every feasible candidate respects the separation
        cand = a + 0.5 * open_kernel.unit
        dn = np.hypot(*(cand - b).T)
        feasible = dn >= ra + rb
        chosen_idx = int(np.argmin(np.hypot(*(cand - new_a).T)))
        assert feasible[chosen_idx] or chosen_idx == 0

    def test_waiting_always_feasible_even_against_wall(self, open_kernel):
        pos = np.array([0.1, 0.1])  # tighter than any clearance
        new = open_kernel.choose(pos, 0.22, 0.5, np.zeros((0, 2)), np.zeros(0))
        assert np.isfinite(new).all()


class TestRun:
    def test_free_flow_oracle(self, corridor_fp):
        sc = Scenario(corridor_fp, ((0, 1),), (0,), 1.0, seed=42)
        result = run(sc, SimConfig(speed_sigma=0.0))
        assert 20.0 <= result.tet <= 23.0

    def test_speed_scaling(self, corridor_fp):
        cfg = SimConfig(speed_sigma=0.0)
        slow = run(Scenario(corridor_fp, ((0, 1),), (0,), 1.0, seed=42), cfg)
        fast = run(Scenario(corridor_fp, ((0, 1),), (0,), 2.0, seed=42), cfg)
        assert abs(fast.tet - slow.tet / 2) <= 0.1 * (slow.tet / 2)

    def test_determinism_bit_identical(self, fp_small):
        sc = Scenario(fp_small, ((0, 10), (1, 10)), (0, 1), 1.34, seed=15)
        a = run(sc)
        b = run(sc)
        assert np.array_equal(a.trajectory.t, b.trajectory.t)
        assert np.array_equal(a.trajectory.agent_id, b.trajectory.agent_id)
        assert np.array_equal(a.trajectory.x, b.trajectory.x)
        assert np.array_equal(a.trajectory.y, b.trajectory.y)
        assert a.tet == b.tet

    def test_tet_is_last_row_and_max_arrival(self, fp_small):
        sc = Scenario(fp_small, ((0, 10),), (0,), 1.34, seed=4)
        res = run(sc)
        assert res.tet == max(res.arrivals.values())
        assert res.tet == res.trajectory.t[-1]

    def test_rows_sorted_and_start_at_zero(self, fp_small):
        sc = Scenario(fp_small, ((0, 10), (3, 10)), (1,), 1.34, seed=6)
        res = run(sc)
        keys = list(zip(res.trajectory.t, res.trajectory.agent_id))
        assert keys == sorted(keys)
        for aid in res.trajectory.agent_ids:
            ts, _, _ = res.trajectory.by_agent(aid)
            assert ts[0] == 0.0
            assert (np.diff(ts) > 0).all()
            assert ts[-1] == res.arrivals[aid]

    def test_safety_no_overlap_no_wall_penetration(self, fp_small):
        from helpers import check_safety

        sc = Scenario(fp_small, ((0, 20), (1, 20)), (0, 1), 1.34, seed=21)
        res = run(sc)
        check_safety(res)

    def test_displacement_and_speed_bounds(self, fp_small):
        sc = Scenario(fp_small, ((2, 15),), (0,), 2.0, seed=13)
        res = run(sc)
        cfg = SimConfig()
        agents = sample_agents(sc)
        for agent in agents:
            ts, xs, ys = res.trajectory.by_agent(agent.id)
            steps = np.hypot(np.diff(xs), np.diff(ys))
            stride = np.clip(cfg.stride_factor * agent.desired_speed, cfg.stride_min, cfg.stride_max)
            assert (steps <= stride + 1e-9).all()
            speeds = steps / np.diff(ts)
            assert (speeds <= agent.desired_speed * 1.05).all()

    def test_progress_in_corridor(self, corridor_fp):
        sc = Scenario(corridor_fp, ((0, 1),), (0,), 1.0, seed=42)
        res = run(sc, SimConfig(speed_sigma=0.0))
        nav = compute_nav_field(corridor_fp, (0,))
        ts, xs, ys = res.trajectory.by_agent(0)
        d = nav.value_at(np.column_stack([xs, ys]))
        # once in the open corridor (past the room door), d never increases
        in_corridor = xs <= 21.0
        dc = d[in_corridor]
        assert (np.diff(dc) <= 1e-9).all()

    def test_timeout_raised(self, fp_small):
        sc = Scenario(fp_small, ((0, 10),), (0,), 1.34, seed=1)
        with pytest.raises(SimulationTimeout):
            run(sc, SimConfig(t_max=0.2))


class TestInterpolate:
    def make_table(self):
        t = np.array([0.0, 0.0, 1.0, 2.0, 2.0, 4.0])
        aid = np.array([0, 1, 0, 0, 1, 1])
        x = np.array([0.0, 5.0, 1.0, 2.0, 6.0, 8.0])
        y = np.array([0.0, 5.0, 0.0, 0.0, 5.0, 5.0])
        return TrajectoryTable(t, aid, x, y)

    def test_initial_positions_exact(self):
        traj = self.make_table()
        pos = interpolate(traj, 0.0, tet=4.0)
        assert pos[0] == (0.0, 0.0)
        assert pos[1] == (5.0, 5.0)

    def test_midpoint_linearity(self):
        traj = self.make_table()
        pos = interpolate(traj, 0.5, tet=4.0)
        assert pos[0] == (0.5, 0.0)
        pos = interpolate(traj, 3.0, tet=4.0)
        assert pos[1] == (7.0, 5.0)

    def test_arrived_agents_excluded(self):
        traj = self.make_table()
        pos = interpolate(traj, 3.0, tet=4.0)
        assert 0 not in pos  # agent 0 arrived at t=2
        pos_end = interpolate(traj, 4.0, tet=4.0)
        assert list(pos_end) == [1]
        assert pos_end[1] == (8.0, 5.0)

    def test_out_of_range(self):
        traj = self.make_table()
        with pytest.raises(OutOfRange):
            interpolate(traj, 4.5, tet=4.0)
        with pytest.raises(OutOfRange):
            interpolate(traj, -0.1, tet=4.0)

    def test_last_arrival_from_fixture_run(self, fp_small):
        sc = Scenario(fp_small, ((0, 5),), (0,), 1.34, seed=30)
        res = run(sc)
        pos = interpolate(res.trajectory, res.tet, tet=res.tet)
        last = max(res.arrivals, key=lambda a: res.arrivals[a])
        assert list(pos) == [last]


class TestTrajectoryCsv:
    def test_round_trip(self, fp_small, tmp_path):
        sc = Scenario(fp_small, ((0, 5),), (0,), 1.34, seed=3)
        res = run(sc)
        path = tmp_path / "t.csv"
        res.trajectory.to_csv(path)
        again = TrajectoryTable.from_csv(path)
        assert len(again) == len(res.trajectory)
        assert np.abs(again.t - res.trajectory.t).max() <= 5e-5
        assert np.abs(again.x - res.trajectory.x).max() <= 5e-5
        assert (again.agent_id == res.trajectory.agent_id).all()
        header = path.read_text().splitlines()[0]
        assert header == "t,agent_id,x,y"
