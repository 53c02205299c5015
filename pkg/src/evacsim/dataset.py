"""Sweep orchestration: build, persist, split, augment and summarize datasets.

A dataset directory holds one subdirectory per sample (floorplan image,
scenario XML, trajectory CSV, density-frame tensor, result metadata) plus a
JSONL manifest written last. Builds are idempotent: each sample directory
carries the content hash of its generating configuration, and a re-run skips
samples whose hash matches. Per-sample simulation failures are recorded in
the manifest with their error class instead of aborting the sweep.
"""
from __future__ import annotations

import hashlib
import json
import xml.etree.ElementTree as ET
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import engine, frames, raster
from .errors import EvacsimError, FormatError, TooFewSamples
from .floorplan import (
    DESTINATION_SCHEMES,
    ORIGIN_SCHEMES,
    DEFAULT_AGENT_COUNTS,
    DEFAULT_MEAN_SPEEDS,
    Floorplan,
    Room,
    Scenario,
    SweepConfig,
    build_floorplan,
    enumerate_geometries,
    enumerate_scenarios,
)

MANIFEST_SCHEMA_VERSION = 1
XML_SCHEMA_VERSION = 1
SPEED_SIGMA_ATTR = engine.SimConfig().speed_sigma


@dataclass(frozen=True)
class BuildConfig:
    """What to sweep and how to run it."""
    mode: str = "paper"
    archetypes: tuple[str, ...] = ("A", "B", "C")
    agent_counts: tuple[int, ...] = DEFAULT_AGENT_COUNTS
    mean_speeds: tuple[float, ...] = DEFAULT_MEAN_SPEEDS
    origin_schemes: tuple[str, ...] = ORIGIN_SCHEMES
    destination_schemes: tuple[str, ...] = DESTINATION_SCHEMES
    base_seed: int = 0
    workers: int = 1
    max_scenarios_per_geometry: int | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "archetypes": list(self.archetypes),
            "agent_counts": list(self.agent_counts),
            "mean_speeds": list(self.mean_speeds),
            "origin_schemes": list(self.origin_schemes),
            "destination_schemes": list(self.destination_schemes),
            "base_seed": self.base_seed,
            "max_scenarios_per_geometry": self.max_scenarios_per_geometry,
        }


def config_hash(cfg: BuildConfig) -> str:
    payload = json.dumps(
        {"config": cfg.to_dict(), "manifest_schema": MANIFEST_SCHEMA_VERSION,
         "xml_schema": XML_SCHEMA_VERSION},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class SampleRecord:
    id: str
    geometry_id: str
    scenario_index: int
    seed: int
    params: dict
    tet: float | None
    status: str                      # "ok" or an error class name
    content_hash: str
    files: dict[str, str] = field(default_factory=dict)
    file_hashes: dict[str, str] = field(default_factory=dict)
    split: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id, "geometry_id": self.geometry_id,
            "scenario_index": self.scenario_index, "seed": self.seed,
            "params": self.params, "tet": self.tet, "status": self.status,
            "content_hash": self.content_hash, "files": self.files,
            "file_hashes": self.file_hashes, "split": self.split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        return cls(**d)


@dataclass
class Manifest:
    schema_version: int
    sweep_hash: str
    base_seed: int
    config: dict
    records: list[SampleRecord] = field(default_factory=list)

    @property
    def ok_records(self) -> list[SampleRecord]:
        return [r for r in self.records if r.status == "ok"]

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            header = {
                "schema_version": self.schema_version,
                "sweep_hash": self.sweep_hash,
                "base_seed": self.base_seed,
                "config": self.config,
            }
            f.write(json.dumps(header, sort_keys=True) + "\n")
            for rec in self.records:
                f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "Manifest":
        with open(path, encoding="utf-8") as f:
            lines = [ln for ln in f if ln.strip()]
        if not lines:
            raise FormatError(f"empty manifest {path}")
        header = json.loads(lines[0])
        if header.get("schema_version") != MANIFEST_SCHEMA_VERSION:
            raise FormatError(f"unsupported manifest schema {header.get('schema_version')}")
        records = [SampleRecord.from_dict(json.loads(ln)) for ln in lines[1:]]
        return cls(header["schema_version"], header["sweep_hash"], header["base_seed"],
                   header["config"], records)


# ---------------------------------------------------------------------------
# Scenario XML dialect
# ---------------------------------------------------------------------------

def _f(v: float) -> str:
    return repr(float(v))


def _vertex_elems(parent, poly) -> None:
    for x, y in poly:
        ET.SubElement(parent, "vertex", x=_f(x), y=_f(y))


def _read_poly(elem) -> tuple[tuple[float, float], ...]:
    return tuple((float(v.get("x")), float(v.get("y"))) for v in elem.findall("vertex"))


def export_scenario_xml(scenario: Scenario) -> str:
    fp = scenario.floorplan
    root = ET.Element("scenario", version=str(XML_SCHEMA_VERSION), seed=str(scenario.seed))
    geom = ET.SubElement(root, "geometry", length=_f(fp.site_length), width=_f(fp.site_width))
    for x1, y1, x2, y2 in fp.walls:
        ET.SubElement(geom, "wall", x1=_f(x1), y1=_f(y1), x2=_f(x2), y2=_f(y2))
    for poly in fp.obstacles:
        _vertex_elems(ET.SubElement(geom, "obstacle"), poly)
    for room in fp.rooms:
        relem = ET.SubElement(geom, "room")
        _vertex_elems(ET.SubElement(relem, "polygon"), room.polygon)
        d = room.door
        ET.SubElement(relem, "door", x1=_f(d[0]), y1=_f(d[1]), x2=_f(d[2]), y2=_f(d[3]))
    for poly in fp.exit_zones:
        _vertex_elems(ET.SubElement(geom, "exit"), poly)
    for poly in fp.bottleneck:
        _vertex_elems(ET.SubElement(ET.SubElement(geom, "bottleneck"), "polygon"), poly)
    for room_idx, count in scenario.origins:
        ET.SubElement(root, "origin", room=str(room_idx), agents=str(count))
    for exit_idx in scenario.destinations:
        ET.SubElement(root, "destination", exit=str(exit_idx))
    ET.SubElement(root, "spawn", meanSpeed=_f(scenario.mean_speed), sigma=str(SPEED_SIGMA_ATTR))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def parse_scenario_xml(text: str) -> Scenario:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise FormatError(f"scenario XML does not parse: {exc}") from exc
    if root.tag != "scenario" or int(root.get("version", "0")) != XML_SCHEMA_VERSION:
        raise FormatError("not a recognized scenario document")
    geom = root.find("geometry")
    walls = tuple(
        (float(w.get("x1")), float(w.get("y1")), float(w.get("x2")), float(w.get("y2")))
        for w in geom.findall("wall")
    )
    obstacles = tuple(_read_poly(o) for o in geom.findall("obstacle"))
    rooms = []
    for relem in geom.findall("room"):
        poly = _read_poly(relem.find("polygon"))
        d = relem.find("door")
        rooms.append(Room(poly, (float(d.get("x1")), float(d.get("y1")),
                                 float(d.get("x2")), float(d.get("y2")))))
    exits = tuple(_read_poly(e) for e in geom.findall("exit"))
    bneck = tuple(_read_poly(p) for b in geom.findall("bottleneck") for p in b.findall("polygon"))
    fp = Floorplan(
        float(geom.get("length")), float(geom.get("width")),
        walls, obstacles, tuple(rooms), exits, bneck,
    )
    origins = tuple(
        (int(o.get("room")), int(o.get("agents"))) for o in root.findall("origin")
    )
    destinations = tuple(int(d.get("exit")) for d in root.findall("destination"))
    spawn = root.find("spawn")
    return Scenario(fp, origins, destinations, float(spawn.get("meanSpeed")), int(root.get("seed")))


# ---------------------------------------------------------------------------
# Build
# ---------------------------------------------------------------------------

def _geometry_base_seed(base_seed: int, geometry_index: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(geometry_index, 0x5EED))
    return int(ss.generate_state(1, np.uint64)[0])


def plan_sweep(cfg: BuildConfig) -> list[tuple[str, int, Scenario]]:
    """Enumerate (geometry id, scenario index, scenario) for the whole sweep."""
    tasks = []
    for geom_index, (gid, params) in enumerate(enumerate_geometries()):
        if params.archetype.value not in cfg.archetypes:
            continue
        fp = build_floorplan(params)
        sweep = SweepConfig(
            agent_counts=cfg.agent_counts,
            mean_speeds=cfg.mean_speeds,
            origin_schemes=cfg.origin_schemes,
            destination_schemes=cfg.destination_schemes,
            base_seed=_geometry_base_seed(cfg.base_seed, geom_index),
        )
        scenarios = enumerate_scenarios(fp, sweep)
        if cfg.max_scenarios_per_geometry is not None:
            scenarios = scenarios[: cfg.max_scenarios_per_geometry]
        tasks.extend((gid, i, sc) for i, sc in enumerate(scenarios))
    return tasks


def _sample_hash(gid: str, index: int, scenario: Scenario, sweep_hash: str) -> str:
    payload = json.dumps(
        {
            "geometry": gid,
            "index": index,
            "seed": scenario.seed,
            "origins": list(scenario.origins),
            "destinations": list(scenario.destinations),
            "mean_speed": scenario.mean_speed,
            "sweep": sweep_hash,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _params_dict(scenario: Scenario) -> dict:
    fp = scenario.floorplan
    return {
        "n_origins": len(scenario.origins),
        "n_destinations": len(scenario.destinations),
        "agents_per_origin": scenario.origins[0][1],
        "mean_speed": scenario.mean_speed,
        "site_length": fp.site_length,
        "site_width": fp.site_width,
    }


def _build_one(task: tuple) -> dict:
    gid, index, scenario, out_dir, sample_hash = task
    sample_id = f"{gid}-s{index:03d}"
    sdir = Path(out_dir) / "samples" / sample_id
    sdir.mkdir(parents=True, exist_ok=True)
    rec = {
        "id": sample_id, "geometry_id": gid, "scenario_index": index,
        "seed": scenario.seed, "params": _params_dict(scenario),
        "tet": None, "status": "ok", "content_hash": sample_hash,
        "files": {}, "file_hashes": {}, "split": None,
    }
    try:
        (sdir / "scenario.xml").write_text(export_scenario_xml(scenario), encoding="utf-8")
        img = raster.rasterize(scenario.floorplan, scenario)
        raster.save_png(img, sdir / "image.png")
        result = engine.run(scenario)
        result.trajectory.to_csv(sdir / "trajectory.csv")
        stack = frames.build_frames(result)
        frames.write_evf(sdir / "frames.evf", stack.classes, stack.rates)
        rec["tet"] = result.tet
        meta = {
            "tet": result.tet, "seed": scenario.seed, "scenario_hash": sample_hash,
            "site_length": scenario.floorplan.site_length,
            "site_width": scenario.floorplan.site_width,
        }
        (sdir / "result.json").write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")
        rel = f"samples/{sample_id}"
        rec["files"] = {
            "scenario": f"{rel}/scenario.xml", "image": f"{rel}/image.png",
            "trajectory": f"{rel}/trajectory.csv", "frames": f"{rel}/frames.evf",
            "result": f"{rel}/result.json",
        }
        rec["file_hashes"] = {
            name: _file_sha256(Path(out_dir) / p) for name, p in rec["files"].items()
        }
    except EvacsimError as exc:
        rec["status"] = type(exc).__name__
        rec["files"] = {}
        rec["file_hashes"] = {}
    (sdir / "done.json").write_text(json.dumps(rec, sort_keys=True), encoding="utf-8")
    return rec


@dataclass
class BuildStats:
    built: int = 0
    skipped: int = 0
    failed: int = 0


def build_dataset(cfg: BuildConfig, out_dir) -> tuple[Manifest, BuildStats]:
    """Run the sweep, persist every sample, and write the manifest last."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sweep_hash = config_hash(cfg)
    tasks = plan_sweep(cfg)
    stats = BuildStats()

    todo = []
    records: dict[str, dict] = {}
    for gid, index, scenario in tasks:
        sample_id = f"{gid}-s{index:03d}"
        shash = _sample_hash(gid, index, scenario, sweep_hash)
        marker = out / "samples" / sample_id / "done.json"
        if marker.exists():
            try:
                rec = json.loads(marker.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                rec = None
            if rec and rec.get("content_hash") == shash:
                records[sample_id] = rec
                stats.skipped += 1
                continue
        todo.append((gid, index, scenario, str(out), shash))

    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for rec in pool.map(_build_one, todo, chunksize=1):
                records[rec["id"]] = rec
                stats.built += 1
    else:
        for task in todo:
            rec = _build_one(task)
            records[rec["id"]] = rec
            stats.built += 1

    ordered = [records[f"{gid}-s{index:03d}"] for gid, index, _ in tasks]
    stats.failed = sum(1 for r in ordered if r["status"] != "ok")
    manifest = Manifest(
        schema_version=MANIFEST_SCHEMA_VERSION,
        sweep_hash=sweep_hash,
        base_seed=cfg.base_seed,
        config=cfg.to_dict(),
        records=[SampleRecord.from_dict(r) for r in ordered],
    )
    manifest.write(out / "manifest.jsonl")
    return manifest, stats


def validate_manifest(manifest: Manifest, root) -> list[str]:
    """Integrity problems: missing files or content-hash mismatches."""
    problems = []
    rootp = Path(root)
    for rec in manifest.ok_records:
        for name, relpath in rec.files.items():
            p = rootp / relpath
            if not p.exists():
                problems.append(f"{rec.id}: missing {relpath}")
            elif rec.file_hashes.get(name) != _file_sha256(p):
                problems.append(f"{rec.id}: hash mismatch for {relpath}")
    return problems


# ---------------------------------------------------------------------------
# Split
# ---------------------------------------------------------------------------

def split(
    manifest: Manifest,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> Manifest:
    """Deterministic geometry-stratified split. Samples are interleaved
    round-robin across geometries so contiguous blocks spread every geometry;
    block sizes follow largest-remainder rounding of the ratios."""
    ok = manifest.ok_records
    if len(ok) < 10:
        raise TooFewSamples(f"need >= 10 ok samples, have {len(ok)}")
    rng = np.random.default_rng(seed)
    groups: dict[str, list[SampleRecord]] = {}
    for rec in ok:
        groups.setdefault(rec.geometry_id, []).append(rec)
    gids = sorted(groups)
    order = rng.permutation(len(gids))
    shuffled = []
    for gi in order:
        rows = groups[gids[gi]]
        shuffled.append([rows[i] for i in rng.permutation(len(rows))])

    interleaved: list[SampleRecord] = []
    depth = max(len(rows) for rows in shuffled)
    for level in range(depth):
        for rows in shuffled:
            if level < len(rows):
                interleaved.append(rows[level])

    n = len(interleaved)
    raw = [n * r for r in ratios]
    counts = [int(np.floor(v)) for v in raw]
    remainder = n - sum(counts)
    frac_order = sorted(range(3), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in range(remainder):
        counts[frac_order[i % 3]] += 1

    assignment: dict[str, str] = {}
    pos = 0
    for name, cnt in zip(("train", "val", "test"), counts):
        for rec in interleaved[pos : pos + cnt]:
            assignment[rec.id] = name
        pos += cnt

    new_records = [
        replace(rec, split=assignment.get(rec.id)) for rec in manifest.records
    ]
    return Manifest(manifest.schema_version, manifest.sweep_hash, manifest.base_seed,
                    dict(manifest.config), new_records)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

@dataclass
class SampleData:
    """A loaded sample: arrays plus the parameter vector and target."""
    image: np.ndarray             # (640, 640, 3)
    classes: np.ndarray           # (8, 160, 160)
    rates: np.ndarray | None
    params_vector: tuple          # (n_origins, n_dest, agents, speed, length, width)
    tet: float


def load_sample(rec: SampleRecord, root) -> SampleData:
    rootp = Path(root)
    image = raster.load_png(rootp / rec.files["image"])
    classes, rates = frames.read_evf(rootp / rec.files["frames"])
    p = rec.params
    vec = (p["n_origins"], p["n_destinations"], p["agents_per_origin"],
           p["mean_speed"], p["site_length"], p["site_width"])
    return SampleData(image, classes, rates, vec, rec.tet)


def augment(sample: SampleData, rng: np.random.Generator) -> SampleData:
    """Independent horizontal/vertical flips, transpose and rot90, each with
    probability 0.5, applied identically to the image and every frame. Site
    dimensions swap when the composite operation exchanges the axes."""
    image = sample.image
    classes = sample.classes
    rates = sample.rates
    do_h, do_v, do_t, do_r = (bool(rng.random() < 0.5) for _ in range(4))

    def to_stack(op_img, op_stack):
        nonlocal image, classes, rates
        image = op_img(image)
        classes = op_stack(classes)
        if rates is not None:
            rates = op_stack(rates)

    if do_h:
        to_stack(lambda a: a[:, ::-1], lambda a: a[:, :, ::-1])
    if do_v:
        to_stack(lambda a: a[::-1], lambda a: a[:, ::-1, :])
    if do_t:
        to_stack(lambda a: a.swapaxes(0, 1), lambda a: a.swapaxes(1, 2))
    if do_r:
        to_stack(lambda a: np.rot90(a, axes=(0, 1)), lambda a: np.rot90(a, axes=(1, 2)))

    vec = sample.params_vector
    if do_t ^ do_r:
        vec = vec[:4] + (vec[5], vec[4])
    return SampleData(
        np.ascontiguousarray(image),
        np.ascontiguousarray(classes),
        None if rates is None else np.ascontiguousarray(rates),
        vec,
        sample.tet,
    )


def flip_horizontal(sample: SampleData) -> SampleData:
    """Deterministic single op, useful for tests and tooling."""
    return SampleData(
        np.ascontiguousarray(sample.image[:, ::-1]),
        np.ascontiguousarray(sample.classes[:, :, ::-1]),
        None if sample.rates is None else np.ascontiguousarray(sample.rates[:, :, ::-1]),
        sample.params_vector,
        sample.tet,
    )


# ---------------------------------------------------------------------------
# Stats
# ---------------------------------------------------------------------------

@dataclass
class DatasetStats:
    n_samples: int
    per_frame_class_counts: np.ndarray   # (8, 4)
    class0_fraction: list[float]
    tet_min: float
    tet_mean: float
    tet_max: float
    per_geometry_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "per_frame_class_counts": self.per_frame_class_counts.tolist(),
            "class0_fraction": self.class0_fraction,
            "tet": {"min": self.tet_min, "mean": self.tet_mean, "max": self.tet_max},
            "per_geometry_counts": self.per_geometry_counts,
        }


def stats(manifest: Manifest, root) -> DatasetStats:
    ok = manifest.ok_records
    if not ok:
        raise TooFewSamples("manifest has no ok samples")
    counts = np.zeros((frames.FRAME_COUNT, 4), np.int64)
    tets = []
    per_geom: dict[str, int] = {}
    rootp = Path(root)
    for rec in ok:
        classes, _ = frames.read_evf(rootp / rec.files["frames"])
        for k in range(frames.FRAME_COUNT):
            counts[k] += np.bincount(classes[k].ravel(), minlength=4)
        tets.append(rec.tet)
        per_geom[rec.geometry_id] = per_geom.get(rec.geometry_id, 0) + 1
    frac0 = [float(counts[k, 0]) / counts[k].sum() for k in range(frames.FRAME_COUNT)]
    return DatasetStats(
        n_samples=len(ok),
        per_frame_class_counts=counts,
        class0_fraction=frac0,
        tet_min=float(min(tets)),
        tet_mean=float(np.mean(tets)),
        tet_max=float(max(tets)),
        per_geometry_counts=per_geom,
    )


__all__ = [
    "BuildConfig", "SampleRecord", "Manifest", "BuildStats", "SampleData", "DatasetStats",
    "build_dataset", "plan_sweep", "split", "augment", "flip_horizontal", "load_sample",
    "export_scenario_xml", "parse_scenario_xml", "stats", "validate_manifest",
    "config_hash",
]
