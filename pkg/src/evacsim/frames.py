"""Conversion of simulation results into eight equitemporal density-class frames.

A run of duration T is cut into 8 frames of dt = T/8. Within a frame, the
cell count N_c is the number of DISTINCT agents whose interpolated position
falls into the cell at least once, sampled on a 0.1 s cadence anchored at the
frame start. Frames are half-open [k*dt, (k+1)*dt) except the last, which
closes at T and also samples T itself. An agent is present at sample time t
while t <= its arrival time.

Rates are stored as float32 (N_c / dt) and class labels are derived from the
stored float32 values, so persisted stacks reconstruct their own labels
exactly. Class thresholds: 0 iff rate == 0; 1 on (0, 0.4]; 2 on (0.4, 0.8];
3 above 0.8 (per-second units, full float precision at the boundaries).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .engine import SimResult, TrajectoryTable
from .errors import FormatError, NegativeRate, NonPositiveTET
from .raster import GridSpec, content_offset

FRAME_COUNT = 8
SAMPLE_DT = 0.1
EVF_MAGIC = b"EVF1"

CLASS_COLORS = {
    0: (255, 255, 255),
    1: (255, 255, 0),
    2: (255, 165, 0),
    3: (255, 0, 0),
}


@dataclass(frozen=True)
class FrameInterval:
    start: float
    end: float
    closed: bool  # last frame includes its upper endpoint

    def sample_times(self, cadence: float = SAMPLE_DT) -> np.ndarray:
        span = self.end - self.start
        n = int(np.ceil(span / cadence)) + 1
        ts = self.start + cadence * np.arange(n + 1)
        if self.closed:
            ts = ts[ts <= self.end + 1e-12]
            if ts[-1] < self.end - 1e-12:
                ts = np.append(ts, self.end)
            else:
                ts[-1] = min(ts[-1], self.end)
        else:
            ts = ts[ts < self.end - 1e-12]
        return ts


@dataclass(frozen=True)
class FramePartition:
    tet: float
    dt: float
    boundaries: tuple[float, ...]  # length FRAME_COUNT + 1

    @property
    def intervals(self) -> list[FrameInterval]:
        return [
            FrameInterval(self.boundaries[k], self.boundaries[k + 1], k == FRAME_COUNT - 1)
            for k in range(FRAME_COUNT)
        ]

    def frame_of(self, t: float) -> int:
        """Frame index containing t; the upper end of the run belongs to the
        last frame."""
        return min(int(t // self.dt), FRAME_COUNT - 1)


def partition_time(tet: float) -> FramePartition:
    if tet <= 0:
        raise NonPositiveTET(f"tet must be > 0, got {tet}")
    dt = tet / FRAME_COUNT
    bounds = tuple(k * dt for k in range(FRAME_COUNT)) + (tet,)
    return FramePartition(tet=tet, dt=dt, boundaries=bounds)


def classify(rate: float) -> int:
    """Density class of one per-second rate."""
    if rate < 0:
        raise NegativeRate(f"rate must be >= 0, got {rate}")
    if rate == 0:
        return 0
    if rate <= 0.4:
        return 1
    if rate <= 0.8:
        return 2
    return 3


def classify_grid(rates: np.ndarray) -> np.ndarray:
    if (rates < 0).any():
        raise NegativeRate("rates must be >= 0")
    classes = np.zeros(rates.shape, np.uint8)
    classes[rates > 0] = 1
    classes[rates > 0.4] = 2
    classes[rates > 0.8] = 3
    return classes


def count_cell_visits(
    traj: TrajectoryTable,
    interval: FrameInterval,
    grid: GridSpec = GridSpec(),
    offset: tuple[int, int] = (0, 0),
) -> np.ndarray:
    """Distinct-agent visit counts per cell for one frame, indexed [cy, cx]."""
    counts = np.zeros((grid.cells, grid.cells), np.int32)
    ts = interval.sample_times()
    ox, oy = offset
    for aid in traj.agent_ids:
        ta, xa, ya = traj.by_agent(aid)
        sel = ts[ts <= ta[-1]]
        if not len(sel):
            continue
        x = np.interp(sel, ta, xa)
        y = np.interp(sel, ta, ya)
        cx = np.floor((ox + x * 10.0) / grid.cell_px).astype(int)
        cy = np.floor((oy + y * 10.0) / grid.cell_px).astype(int)
        np.clip(cx, 0, grid.cells - 1, out=cx)
        np.clip(cy, 0, grid.cells - 1, out=cy)
        visited = np.unique(cy * grid.cells + cx)
        counts.ravel()[visited] += 1
    return counts


@dataclass
class FrameStack:
    counts: np.ndarray   # (8, 160, 160) int32
    rates: np.ndarray    # (8, 160, 160) float32, counts / dt
    classes: np.ndarray  # (8, 160, 160) uint8 in {0..3}
    dt: float
    tet: float


def build_frames(
    result: SimResult,
    grid: GridSpec = GridSpec(),
    offset: tuple[int, int] | None = None,
) -> FrameStack:
    """Compose partition, counting, normalization and classification over all
    eight frames, registered to the rasterized image's grid."""
    if offset is None:
        fp = result.scenario.floorplan
        offset = content_offset(fp.site_length, fp.site_width)
    part = partition_time(result.tet)
    counts = np.stack([
        count_cell_visits(result.trajectory, iv, grid, offset) for iv in part.intervals
    ])
    rates = (counts / part.dt).astype(np.float32)
    classes = classify_grid(rates)
    return FrameStack(counts=counts, rates=rates, classes=classes, dt=part.dt, tet=result.tet)


def frames_from_table(
    traj: TrajectoryTable,
    tet: float,
    site_length: float,
    site_width: float,
    grid: GridSpec = GridSpec(),
) -> FrameStack:
    """Build frames from a bare trajectory table (the CSV-file path)."""
    offset = content_offset(site_length, site_width)
    part = partition_time(tet)
    counts = np.stack([count_cell_visits(traj, iv, grid, offset) for iv in part.intervals])
    rates = (counts / part.dt).astype(np.float32)
    return FrameStack(counts, rates, classify_grid(rates), part.dt, tet)


def write_evf(path, classes: np.ndarray, rates: np.ndarray | None = None) -> None:
    """Binary tensor file: magic, uint32 dims, class bytes, float32 LE rates."""
    classes = np.asarray(classes, np.uint8)
    if rates is None:
        rates = np.zeros(classes.shape, np.float32)
    rates = np.asarray(rates, np.float32)
    if classes.shape != rates.shape or classes.ndim != 3:
        raise FormatError(f"bad tensor shapes {classes.shape} vs {rates.shape}")
    with open(path, "wb") as f:
        f.write(EVF_MAGIC)
        f.write(struct.pack("<III", *classes.shape))
        f.write(classes.tobytes())
        f.write(rates.astype("<f4").tobytes())


def read_evf(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != EVF_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        dims = struct.unpack("<III", f.read(12))
        n = dims[0] * dims[1] * dims[2]
        classes = np.frombuffer(f.read(n), np.uint8).reshape(dims)
        rates = np.frombuffer(f.read(4 * n), "<f4").reshape(dims)
        if f.read(1):
            raise FormatError("trailing bytes after tensor payload")
    return classes.copy(), rates.copy()


def render_frame(classes_2d: np.ndarray, upscale: int = 4) -> np.ndarray:
    """Class grid to an RGB image, nearest-neighbor upscaled."""
    h, w = classes_2d.shape
    img = np.zeros((h, w, 3), np.uint8)
    for cls, color in CLASS_COLORS.items():
        img[classes_2d == cls] = color
    return np.kron(img, np.ones((upscale, upscale, 1), np.uint8))


__all__ = [
    "FRAME_COUNT", "SAMPLE_DT", "CLASS_COLORS", "FrameInterval", "FramePartition",
    "FrameStack", "partition_time", "classify", "classify_grid", "count_cell_visits",
    "build_frames", "frames_from_table", "write_evf", "read_evf", "render_frame",
]
