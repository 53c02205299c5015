"""Command-line orchestration of the pipeline.

Subcommands: gen, sim, frames, dataset build|stats|split, eval, render,
export-xml. Exit codes: 0 success, 1 usage error, 2 data error. Every
subcommand with an output directory echoes its resolved configuration to
<out>/run_config.json for provenance.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__, dataset, engine, evaluate, frames, raster
from .errors import EvacsimError
from .floorplan import (
    Archetype,
    Scenario,
    build_floorplan,
    enumerate_geometries,
    enumerate_versions,
    floorplan_to_text,
    origin_rooms,
    scenario_seed,
    validate_connectivity,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _echo_config(out_dir: Path, command: str, resolved: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "version": __version__, "config": resolved}
    (out_dir / "run_config.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(","))


def _names(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(","))


def _default_scenario(fp, seed: int = 0) -> Scenario:
    return Scenario(
        fp,
        tuple((i, 10) for i in range(len(fp.rooms))),
        tuple(range(len(fp.exit_zones))),
        1.34,
        seed,
    )


def cmd_gen(args) -> int:
    out = Path(args.out)
    plans = out / "floorplans"
    plans.mkdir(parents=True, exist_ok=True)
    wanted = ("A", "B", "C") if args.archetype == "all" else (args.archetype,)
    count = 0
    for gid, params in enumerate_geometries():
        if params.archetype.value not in wanted:
            continue
        fp = build_floorplan(params)
        report = validate_connectivity(fp)
        if not report.all_reachable:
            print(f"warning: {gid} has unreachable door/exit pairs", file=sys.stderr)
        (plans / f"{gid}.txt").write_text(floorplan_to_text(fp), encoding="utf-8")
        img = raster.rasterize(fp, _default_scenario(fp))
        raster.save_png(img, plans / f"{gid}.png")
        count += 1
    _echo_config(out, "gen", {"archetype": args.archetype, "out": str(out)})
    print(f"wrote {count} floorplans to {plans}")
    return 0


def cmd_sim(args) -> int:
    xml_text = Path(args.scenario).read_text(encoding="utf-8")
    scenario = dataset.parse_scenario_xml(xml_text)
    if args.seed is not None:
        scenario = Scenario(
            scenario.floorplan, scenario.origins, scenario.destinations,
            scenario.mean_speed, args.seed,
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = engine.run(scenario)
    result.trajectory.to_csv(out / "trajectory.csv")
    meta = {
        "tet": result.tet,
        "seed": scenario.seed,
        "scenario_hash": hashlib.sha256(xml_text.encode()).hexdigest(),
        "site_length": scenario.floorplan.site_length,
        "site_width": scenario.floorplan.site_width,
    }
    (out / "result.json").write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")
    _echo_config(out, "sim", {"scenario": args.scenario, "seed": scenario.seed, "out": str(out)})
    print(f"tet={result.tet:.4f} s, {len(result.trajectory)} trajectory rows")
    return 0


def cmd_frames(args) -> int:
    scenario = dataset.parse_scenario_xml(Path(args.scenario).read_text(encoding="utf-8"))
    traj = engine.TrajectoryTable.from_csv(args.trajectory)
    if args.meta:
        tet = json.loads(Path(args.meta).read_text(encoding="utf-8"))["tet"]
    else:
        tet = float(traj.t.max())
    stack = frames.frames_from_table(
        traj, tet, scenario.floorplan.site_length, scenario.floorplan.site_width
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    frames.write_evf(out, stack.classes, stack.rates)
    print(f"wrote {out} (tet={tet:.4f} s)")
    return 0


def cmd_dataset_build(args) -> int:
    cfg = dataset.BuildConfig(
        mode=args.mode,
        archetypes=_names(args.archetypes),
        agent_counts=_ints(args.agents),
        mean_speeds=_floats(args.speeds),
        origin_schemes=_names(args.origin_schemes),
        destination_schemes=_names(args.destination_schemes),
        base_seed=args.seed,
        workers=args.workers,
        max_scenarios_per_geometry=args.max_scenarios_per_geometry,
    )
    out = Path(args.out)
    _echo_config(out, "dataset build", {**cfg.to_dict(), "workers": cfg.workers, "out": str(out)})
    manifest, stats = dataset.build_dataset(cfg, out)
    ok = len(manifest.ok_records)
    print(
        f"built {stats.built}, skipped {stats.skipped}, failed {stats.failed}; "
        f"{ok} ok samples in {out / 'manifest.jsonl'}"
    )
    return 0


def cmd_dataset_stats(args) -> int:
    manifest = dataset.Manifest.read(args.manifest)
    root = Path(args.manifest).parent
    st = dataset.stats(manifest, root)
    text = json.dumps(st.to_dict(), indent=2, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.json").write_text(text + "\n", encoding="utf-8")
        _echo_config(out, "dataset stats", {"manifest": args.manifest, "out": str(out)})
    print(text)
    return 0


def cmd_dataset_split(args) -> int:
    manifest = dataset.Manifest.read(args.manifest)
    ratios = _floats(args.ratios)
    if len(ratios) != 3:
        raise EvacsimError(f"need 3 ratios, got {len(ratios)}")
    new_manifest = dataset.split(manifest, ratios, args.seed)
    out = Path(args.out) if args.out else Path(args.manifest)
    new_manifest.write(out)
    counts = {}
    for rec in new_manifest.ok_records:
        counts[rec.split] = counts.get(rec.split, 0) + 1
    print(f"split written to {out}: {counts}")
    return 0


def _nav_for(scenario: Scenario, cache: dict) -> engine.NavField:
    key = (scenario.floorplan, scenario.destinations)
    if key not in cache:
        cache[key] = engine.compute_nav_field(scenario.floorplan, scenario.destinations)
    return cache[key]


def cmd_eval(args) -> int:
    if args.baseline is None and args.pred is None:
        raise EvacsimError("eval needs --pred or --baseline")
    manifest = dataset.Manifest.read(args.truth)
    root = Path(args.truth).parent
    records = manifest.ok_records
    if args.split:
        records = [r for r in records if r.split == args.split]
    predictions: list[evaluate.Prediction] = []
    truth_classes: list[np.ndarray] = []
    truth_tets: list[float] = []
    nav_cache: dict = {}
    for rec in records:
        classes, _ = frames.read_evf(root / rec.files["frames"])
        if args.baseline == "majority":
            scenario = dataset.parse_scenario_xml(
                (root / rec.files["scenario"]).read_text(encoding="utf-8")
            )
            pred = evaluate.baseline_majority(scenario, _nav_for(scenario, nav_cache), rec.id)
        else:
            pred_path = Path(args.pred) / f"{rec.id}.evf"
            sidecar = Path(args.pred) / f"{rec.id}.tet.json"
            if not pred_path.exists():
                print(f"skipping {rec.id}: no prediction file", file=sys.stderr)
                continue
            pred_classes, _ = frames.read_evf(pred_path)
            tet_hat = json.loads(sidecar.read_text(encoding="utf-8"))["tet_hat"]
            pred = evaluate.Prediction(pred_classes, tet_hat, rec.id)
        predictions.append(pred)
        truth_classes.append(classes)
        truth_tets.append(rec.tet)
    report = evaluate.evaluate(predictions, truth_classes, truth_tets, lambda_t=args.lambda_t)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _echo_config(out, "eval", {
        "truth": args.truth, "pred": args.pred, "baseline": args.baseline,
        "lambda_t": args.lambda_t, "split": args.split, "out": str(out),
    })
    print(json.dumps({
        "n_test": report.n_test, "accuracy": report.confusion.accuracy,
        "tversky_micro": report.tversky_micro, "mae": report.mae, "re": report.re,
    }, sort_keys=True))
    return 0


def cmd_render(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(out, "render", {"frames": args.frames, "report": args.report, "out": str(out)})
    if args.frames:
        classes, _ = frames.read_evf(args.frames)
        for k in range(classes.shape[0]):
            img = frames.render_frame(classes[k])
            Image.fromarray(img, "RGB").save(out / f"frame_{k}.png", format="PNG")
        print(f"wrote {classes.shape[0]} frame renders to {out}")
    if args.report:
        data = json.loads(Path(args.report).read_text(encoding="utf-8"))
        cm = evaluate.ConfusionMatrix(np.asarray(data["confusion"], np.int64))
        img = evaluate.render_confusion(cm)
        Image.fromarray(img, "RGB").save(out / "confusion.png", format="PNG")
        print(f"wrote {out / 'confusion.png'}")
    if not args.frames and not args.report:
        raise EvacsimError("render needs --frames and/or --report")
    return 0


def cmd_export_xml(args) -> int:
    params = enumerate_versions(Archetype(args.archetype))[args.version]
    fp = build_floorplan(params)
    rooms = origin_rooms(fp, args.origins)
    if args.destinations == "all":
        dests = tuple(range(len(fp.exit_zones)))
    else:
        dests = (int(args.destinations),)
    scenario = Scenario(
        fp,
        tuple((r, args.agents) for r in rooms),
        dests,
        args.speed,
        scenario_seed(args.seed, 0),
    )
    text = dataset.export_scenario_xml(scenario)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    print(f"wrote {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="evacsim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"evacsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate floorplans and images")
    p.add_argument("--archetype", choices=["A", "B", "C", "all"], default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("sim", help="simulate one scenario XML")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("frames", help="trajectory CSV to density-frame tensor")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--meta", default=None, help="result.json with the exact tet")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_frames)

    pd = sub.add_parser("dataset", help="dataset operations")
    dsub = pd.add_subparsers(dest="dataset_command", required=True)

    p = dsub.add_parser("build", help="run a sweep and persist samples")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["paper", "custom"], default="paper")
    p.add_argument("--archetypes", default="A,B,C")
    p.add_argument("--agents", default="10,20,30")
    p.add_argument("--speeds", default="1.0,1.34,2.0")
    p.add_argument("--origin-schemes", dest="origin_schemes", default="all,half,farthest")
    p.add_argument("--destination-schemes", dest="destination_schemes", default="each,all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-scenarios-per-geometry", type=int, default=None)
    p.set_defaults(func=cmd_dataset_build)

    p = dsub.add_parser("stats", help="class histograms and TET distribution")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dataset_stats)

    p = dsub.add_parser("split", help="assign train/val/test splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dataset_split)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p.add_argument("--truth", required=True, help="manifest path")
    p.add_argument("--pred", default=None, help="directory of <id>.evf + <id>.tet.json")
    p.add_argument("--baseline", choices=["majority"], default=None)
    p.add_argument("--lambda-t", dest="lambda_t", type=float, default=1.0)
    p.add_argument("--split", choices=["train", "val", "test"], default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="frame tensors or eval reports to PNG")
    p.add_argument("--frames", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("export-xml", help="emit one scenario XML")
    p.add_argument("--archetype", choices=["A", "B", "C"], required=True)
    p.add_argument("--geometry-version", dest="version", type=int, default=0)
    p.add_argument("--origins", choices=["all", "half", "farthest"], default="all")
    p.add_argument("--destinations", default="all", help='"all" or an exit index')
    p.add_argument("--agents", type=int, default=10)
    p.add_argument("--speed", type=float, default=1.34)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_xml)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EvacsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
