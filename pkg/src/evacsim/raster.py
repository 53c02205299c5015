"""Fixed-scale rendering of floorplans and the world/pixel/cell mappings.

The canvas is always 640x640 RGB at 10 px/m, so the full 64x64 m site fits
exactly and a 4x4 px grid cell is always 0.4x0.4 m. Smaller floorplans are
centered and padded with black. Pixel row py tracks world y directly (no
vertical flip); the content origin is the floorplan's (0, 0) corner.

Colors: white interior, black walls/obstacles (2 px stroke), origin rooms
red, destination zones green, padding black.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import OutOfBounds, SiteTooLarge
from .floorplan import Floorplan, Scenario
from .geometry import points_in_polygon

CANVAS_PX = 640
PX_PER_M = 10
STROKE_RADIUS_PX = 1.0  # 2 px stroke width

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
RED = (255, 0, 0)
GREEN = (0, 255, 0)


@dataclass(frozen=True)
class GridSpec:
    cell_px: int = 4
    cell_m: float = 0.4
    cells: int = 160

    def __post_init__(self):
        assert self.cell_px * self.cells == CANVAS_PX
        assert abs(self.cell_m * self.cells - 64.0) < 1e-12


@dataclass
class FloorImage:
    pixels: np.ndarray          # (640, 640, 3) uint8, indexed [py, px]
    offset: tuple[int, int]     # (px, py) of the floorplan origin
    site_length: float
    site_width: float
    scale: int = PX_PER_M

    @property
    def content_px(self) -> tuple[int, int]:
        return int(round(self.site_length * self.scale)), int(round(self.site_width * self.scale))


def content_offset(site_length: float, site_width: float) -> tuple[int, int]:
    w = int(round(site_length * PX_PER_M))
    h = int(round(site_width * PX_PER_M))
    return (CANVAS_PX - w) // 2, (CANVAS_PX - h) // 2


def _fill_polygon(pixels: np.ndarray, poly, ox: int, oy: int, color) -> None:
    v = np.asarray(poly, float) * PX_PER_M
    x0 = max(int(np.floor(v[:, 0].min())) - 1, 0)
    x1 = min(int(np.ceil(v[:, 0].max())) + 1, CANVAS_PX - ox)
    y0 = max(int(np.floor(v[:, 1].min())) - 1, 0)
    y1 = min(int(np.ceil(v[:, 1].max())) + 1, CANVAS_PX - oy)
    if x1 <= x0 or y1 <= y0:
        return
    cx = np.arange(x0, x1) + 0.5
    cy = np.arange(y0, y1) + 0.5
    gx, gy = np.meshgrid(cx, cy)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    inside = points_in_polygon(pts, [tuple(p) for p in v]).reshape(y1 - y0, x1 - x0)
    win = pixels[oy + y0 : oy + y1, ox + x0 : ox + x1]
    win[inside] = color


def _stroke_segment(pixels: np.ndarray, seg, ox: int, oy: int, color) -> None:
    x1, y1, x2, y2 = (c * PX_PER_M for c in seg)
    lo_x = max(int(np.floor(min(x1, x2) - STROKE_RADIUS_PX)) - 1, -ox)
    hi_x = min(int(np.ceil(max(x1, x2) + STROKE_RADIUS_PX)) + 1, CANVAS_PX - ox)
    lo_y = max(int(np.floor(min(y1, y2) - STROKE_RADIUS_PX)) - 1, -oy)
    hi_y = min(int(np.ceil(max(y1, y2) + STROKE_RADIUS_PX)) + 1, CANVAS_PX - oy)
    if hi_x <= lo_x or hi_y <= lo_y:
        return
    cx = np.arange(lo_x, hi_x) + 0.5
    cy = np.arange(lo_y, hi_y) + 0.5
    gx, gy = np.meshgrid(cx, cy)
    dx, dy = x2 - x1, y2 - y1
    len2 = dx * dx + dy * dy
    t = ((gx - x1) * dx + (gy - y1) * dy) / (len2 if len2 > 0 else 1.0)
    t = np.clip(t, 0.0, 1.0)
    dist = np.hypot(gx - (x1 + t * dx), gy - (y1 + t * dy))
    mask = dist <= STROKE_RADIUS_PX
    win = pixels[oy + lo_y : oy + hi_y, ox + lo_x : ox + hi_x]
    win[mask] = color


def rasterize(fp: Floorplan, scenario: Scenario) -> FloorImage:
    """Render the annotated floorplan image for one scenario."""
    if fp.site_length > 64 or fp.site_width > 64:
        raise SiteTooLarge(f"site {fp.site_length} x {fp.site_width} m exceeds 64 x 64 m")
    ox, oy = content_offset(fp.site_length, fp.site_width)
    w, h = int(round(fp.site_length * PX_PER_M)), int(round(fp.site_width * PX_PER_M))
    pixels = np.zeros((CANVAS_PX, CANVAS_PX, 3), np.uint8)
    pixels[oy : oy + h, ox : ox + w] = WHITE

    for room_idx, _ in scenario.origins:
        _fill_polygon(pixels, fp.rooms[room_idx].polygon, ox, oy, RED)
    for exit_idx in scenario.destinations:
        _fill_polygon(pixels, fp.exit_zones[exit_idx], ox, oy, GREEN)
    for seg in fp.walls:
        _stroke_segment(pixels, seg, ox, oy, BLACK)
    for poly in fp.obstacles:
        _fill_polygon(pixels, poly, ox, oy, BLACK)
    for poly in fp.bottleneck:
        _fill_polygon(pixels, poly, ox, oy, BLACK)
    return FloorImage(pixels, (ox, oy), fp.site_length, fp.site_width)


def world_to_pixel(x: float, y: float, img: FloorImage) -> tuple[int, int]:
    """Pixel containing a world point; the site's far edges map into the
    last content pixel."""
    if not (0 <= x <= img.site_length and 0 <= y <= img.site_width):
        raise OutOfBounds(f"({x}, {y}) outside site {img.site_length} x {img.site_width}")
    w, h = img.content_px
    px = img.offset[0] + min(int(np.floor(x * img.scale)), w - 1)
    py = img.offset[1] + min(int(np.floor(y * img.scale)), h - 1)
    return px, py


def pixel_to_world(px: int, py: int, img: FloorImage) -> tuple[float, float]:
    """Center of a pixel in world coordinates."""
    return (px - img.offset[0] + 0.5) / img.scale, (py - img.offset[1] + 0.5) / img.scale


def cell_of(x: float, y: float, img: FloorImage, grid: GridSpec = GridSpec()) -> tuple[int, int]:
    """Grid cell containing a world point; cells are half-open with the last
    row/column closed at the canvas edge."""
    fx = img.offset[0] + x * img.scale
    fy = img.offset[1] + y * img.scale
    if not (0 <= fx <= CANVAS_PX and 0 <= fy <= CANVAS_PX):
        raise OutOfBounds(f"({x}, {y}) maps outside the canvas")
    cx = min(int(np.floor(fx / grid.cell_px)), grid.cells - 1)
    cy = min(int(np.floor(fy / grid.cell_px)), grid.cells - 1)
    return cx, cy


def save_png(img: FloorImage, path) -> None:
    Image.fromarray(img.pixels, "RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


__all__ = [
    "CANVAS_PX", "PX_PER_M", "GridSpec", "FloorImage", "content_offset",
    "rasterize", "world_to_pixel", "pixel_to_world", "cell_of", "save_png", "load_png",
]
