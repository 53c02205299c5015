"""Losses, metrics and reference baselines for density/TET predictors.

The Tversky index TI = TP / (TP + alpha*FP + beta*FN) generalizes Dice
(alpha = beta = 0.5) and Jaccard (alpha = beta = 1). The classification loss
is 1 - TI with the defaults alpha = 0.1, beta = 0.9, aggregated micro over
the non-background classes {1, 2, 3} one-vs-rest across all eight frames;
background is excluded from TP so an all-zero prediction scores loss 1
whenever any agents were present. The combined loss adds squared TET error:
l_total = (T - T_hat)^2 + lambda_T * l_tversky, lambda_T defaulting to 1.

Baselines need no learned model: the majority baseline predicts class 0
everywhere, and the flow heuristic estimates TET as travel time of the
farthest origin plus a capacity term N / (C * total exit width) with
C = 1.33 persons/(m*s).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import NavField
from .errors import (
    EmptyList,
    NegativeWeights,
    NonPositiveTruth,
    ShapeMismatch,
)
from .floorplan import Scenario
from .frames import FRAME_COUNT
from .geometry import polygon_bounds, polygon_centroid

N_CLASSES = 4
DEFAULT_ALPHA = 0.1
DEFAULT_BETA = 0.9
DEFAULT_LAMBDA_T = 1.0
FLOW_CAPACITY = 1.33  # persons per meter of exit width per second


@dataclass
class Prediction:
    classes: np.ndarray  # (8, 160, 160) labels in {0..3}
    tet_hat: float
    sample_id: str = ""


@dataclass
class ConfusionMatrix:
    counts: np.ndarray = field(default_factory=lambda: np.zeros((N_CLASSES, N_CLASSES), np.int64))

    def add(self, truth: np.ndarray, pred: np.ndarray) -> None:
        t = np.asarray(truth).ravel().astype(np.int64)
        p = np.asarray(pred).ravel().astype(np.int64)
        if t.shape != p.shape:
            raise ShapeMismatch(f"truth {t.shape} vs pred {p.shape}")
        self.counts += np.bincount(
            t * N_CLASSES + p, minlength=N_CLASSES * N_CLASSES
        ).reshape(N_CLASSES, N_CLASSES)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0


def tversky_index(pred, truth, alpha: float, beta: float) -> float:
    """TI over two boolean sets on the same index domain; 1.0 when both are
    empty."""
    if alpha < 0 or beta < 0:
        raise NegativeWeights(f"alpha={alpha}, beta={beta} must be >= 0")
    p = np.asarray(pred, bool)
    g = np.asarray(truth, bool)
    if p.shape != g.shape:
        raise ShapeMismatch(f"pred {p.shape} vs truth {g.shape}")
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    if tp == fp == fn == 0:
        return 1.0
    return tp / (tp + alpha * fp + beta * fn)


def _foreground_counts(pred: np.ndarray, truth: np.ndarray) -> tuple[int, int, int]:
    """Micro TP/FP/FN over classes 1..3 one-vs-rest."""
    tp = fp = fn = 0
    for cls in range(1, N_CLASSES):
        p = pred == cls
        g = truth == cls
        tp += int((p & g).sum())
        fp += int((p & ~g).sum())
        fn += int((~p & g).sum())
    return tp, fp, fn


def tversky_loss(
    pred: np.ndarray,
    truth: np.ndarray,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
) -> float:
    """1 - TI with micro aggregation over classes 1..3 across all frames."""
    if alpha < 0 or beta < 0:
        raise NegativeWeights(f"alpha={alpha}, beta={beta} must be >= 0")
    p = np.asarray(pred)
    g = np.asarray(truth)
    if p.shape != g.shape:
        raise ShapeMismatch(f"pred {p.shape} vs truth {g.shape}")
    tp, fp, fn = _foreground_counts(p, g)
    if tp == fp == fn == 0:
        return 0.0
    return 1.0 - tp / (tp + alpha * fp + beta * fn)


def total_loss(
    tet: float,
    tet_hat: float,
    truth: np.ndarray,
    pred: np.ndarray,
    lambda_t: float = DEFAULT_LAMBDA_T,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
) -> dict[str, float]:
    l_evac = (tet - tet_hat) ** 2
    l_tversky = tversky_loss(pred, truth, alpha, beta)
    return {
        "l_evac": l_evac,
        "l_tversky": l_tversky,
        "l_total": l_evac + lambda_t * l_tversky,
    }


def confusion(predictions: list[np.ndarray], truths: list[np.ndarray]) -> ConfusionMatrix:
    """Counts over every (frame, cell) pair across all samples; rows are
    ground truth, columns predicted."""
    if len(predictions) != len(truths):
        raise ShapeMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    cm = ConfusionMatrix()
    for p, g in zip(predictions, truths):
        cm.add(g, p)
    return cm


def mae_re(pairs: list[tuple[float, float]]) -> dict[str, float]:
    """Mean absolute TET error and mean relative error over (truth, pred)."""
    if not pairs:
        raise EmptyList("need at least one (tet, tet_hat) pair")
    errors = []
    rel = []
    for t, t_hat in pairs:
        if t <= 0:
            raise NonPositiveTruth(f"true tet must be > 0, got {t}")
        errors.append(abs(t - t_hat))
        rel.append(abs(t - t_hat) / t)
    return {"mae": float(np.mean(errors)), "re": float(np.mean(rel))}


def exit_width(poly) -> float:
    """Nominal clear width of an exit zone: the larger bbox extent."""
    x0, y0, x1, y1 = polygon_bounds(poly)
    return max(x1 - x0, y1 - y0)


def flow_tet_estimate(
    distances: list[float],
    n_total: int,
    mean_speed: float,
    total_exit_width: float,
    capacity: float = FLOW_CAPACITY,
) -> float:
    """Closed-form egress heuristic: farthest travel time plus queueing."""
    travel = max(distances) / mean_speed
    return travel + n_total / (capacity * total_exit_width)


def _origin_distance(nav: NavField, poly) -> float:
    """Worst-case geodesic distance over a room's interior: the evacuation
    time tracks the last agent, which may spawn anywhere in the room."""
    h = nav.resolution
    x0, y0, x1, y1 = polygon_bounds(poly)
    ny, nx = nav.values.shape
    ix0, ix1 = max(int(x0 / h), 0), min(int(np.ceil(x1 / h)), nx)
    iy0, iy1 = max(int(y0 / h), 0), min(int(np.ceil(y1 / h)), ny)
    window = nav.values[iy0:iy1, ix0:ix1]
    finite = window[np.isfinite(window)]
    if len(finite):
        return float(finite.max())
    cx, cy = polygon_centroid(poly)
    return float(nav.value_at(np.array([[cx, cy]]))[0])


def baseline_flow_tet(scenario: Scenario, nav: NavField, capacity: float = FLOW_CAPACITY) -> float:
    """Flow estimate: worst-case origin travel plus exit-capacity queueing."""
    fp = scenario.floorplan
    distances = [
        _origin_distance(nav, fp.rooms[room_idx].polygon) for room_idx, _ in scenario.origins
    ]
    width = sum(exit_width(fp.exit_zones[i]) for i in scenario.destinations)
    return flow_tet_estimate(distances, scenario.total_agents, scenario.mean_speed, width, capacity)


def baseline_majority(
    scenario: Scenario,
    nav: NavField,
    sample_id: str = "",
    grid_cells: int = 160,
) -> Prediction:
    """All cells background; TET from the flow heuristic."""
    classes = np.zeros((FRAME_COUNT, grid_cells, grid_cells), np.uint8)
    return Prediction(classes=classes, tet_hat=baseline_flow_tet(scenario, nav), sample_id=sample_id)


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    tversky_per_class: dict[int, float]
    tversky_micro: float
    mae: float
    re: float
    losses: dict[str, float]
    n_test: int

    def to_dict(self) -> dict:
        return {
            "n_test": self.n_test,
            "confusion": self.confusion.counts.tolist(),
            "accuracy": self.confusion.accuracy,
            "tversky_per_class": {str(k): v for k, v in self.tversky_per_class.items()},
            "tversky_micro": self.tversky_micro,
            "mae": self.mae,
            "re": self.re,
            "losses": self.losses,
        }


def evaluate(
    predictions: list[Prediction],
    truth_classes: list[np.ndarray],
    truth_tets: list[float],
    lambda_t: float = DEFAULT_LAMBDA_T,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
) -> EvalReport:
    """Aggregate metrics for a prediction set against ground truth."""
    if not predictions:
        raise EmptyList("no predictions to evaluate")
    if not (len(predictions) == len(truth_classes) == len(truth_tets)):
        raise ShapeMismatch("prediction/truth sample counts disagree")
    cm = confusion([p.classes for p in predictions], truth_classes)
    tp_all = fp_all = fn_all = 0
    per_class: dict[int, float] = {}
    for cls in range(1, N_CLASSES):
        tp = fp = fn = 0
        for p, g in zip(predictions, truth_classes):
            pm = p.classes == cls
            gm = np.asarray(g) == cls
            tp += int((pm & gm).sum())
            fp += int((pm & ~gm).sum())
            fn += int((~pm & gm).sum())
        per_class[cls] = 1.0 if tp == fp == fn == 0 else tp / (tp + alpha * fp + beta * fn)
        tp_all += tp
        fp_all += fp
        fn_all += fn
    micro = 1.0 if tp_all == fp_all == fn_all == 0 else tp_all / (tp_all + alpha * fp_all + beta * fn_all)
    pairs = [(t, p.tet_hat) for t, p in zip(truth_tets, predictions)]
    errs = mae_re(pairs)
    l_evac = float(np.mean([(t - p.tet_hat) ** 2 for t, p in zip(truth_tets, predictions)]))
    l_tversky = 1.0 - micro
    return EvalReport(
        confusion=cm,
        tversky_per_class=per_class,
        tversky_micro=micro,
        mae=errs["mae"],
        re=errs["re"],
        losses={"l_evac": l_evac, "l_tversky": l_tversky, "l_total": l_evac + lambda_t * l_tversky},
        n_test=len(predictions),
    )


def render_confusion(cm: ConfusionMatrix, cell_px: int = 80) -> np.ndarray:
    """Confusion matrix as an RGB image: blue intensity tracks the row-share,
    counts drawn as text."""
    from PIL import Image, ImageDraw

    n = N_CLASSES
    margin = 40
    size = margin + n * cell_px
    img = Image.new("RGB", (size, size), (255, 255, 255))
    draw = ImageDraw.Draw(img)
    row_sums = cm.counts.sum(axis=1, keepdims=True)
    shares = cm.counts / np.maximum(row_sums, 1)
    for r in range(n):
        for c in range(n):
            x0 = margin + c * cell_px
            y0 = margin + r * cell_px
            level = int(255 - 155 * shares[r, c])
            draw.rectangle([x0, y0, x0 + cell_px - 1, y0 + cell_px - 1],
                           fill=(level, level, 255), outline=(0, 0, 0))
            draw.text((x0 + 6, y0 + cell_px // 2 - 6), str(int(cm.counts[r, c])), fill=(0, 0, 0))
    for k in range(n):
        draw.text((margin + k * cell_px + cell_px // 2 - 4, margin // 2 - 6), str(k), fill=(0, 0, 0))
        draw.text((margin // 2 - 4, margin + k * cell_px + cell_px // 2 - 6), str(k), fill=(0, 0, 0))
    return np.asarray(img)


__all__ = [
    "N_CLASSES", "DEFAULT_ALPHA", "DEFAULT_BETA", "DEFAULT_LAMBDA_T", "FLOW_CAPACITY",
    "Prediction", "ConfusionMatrix", "EvalReport", "tversky_index", "tversky_loss",
    "total_loss", "confusion", "mae_re", "exit_width", "flow_tet_estimate",
    "baseline_flow_tet", "baseline_majority", "evaluate", "render_confusion",
]
