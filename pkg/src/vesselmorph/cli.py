"""Command-line entry point: ``vesselmorph <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import __version__
from .icp import rigid_icp
from .io import (LOSSLESS_DIGITS, FormatError, read_centerline, read_cloud, write_centerline, write_cloud,
                 write_json, write_station_field, write_table)
from .metrics import compare
from .pipeline import (METHODS, SOFTDTW_MODES, ConfigError, RunConfig, StageError, align_stage,
                       make_normalizer, run_pipeline, segment_stage)
from .segmentation import Centerline
from .synthetic import (BezierSpec, Bend, Compose, Scale, Translate, drop_branches, make_pair,
                        make_tree, random_recipe, tube_sample)

logger = logging.getLogger("vesselmorph")


def _floats(raw: str) -> list[float]:
    return [float(x) for x in raw.split(",") if x.strip()]


def _vec3(raw: str) -> tuple[float, float, float]:
    vals = _floats(raw)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {raw!r}")
    return tuple(vals)


def _add_config_flags(p: argparse.ArgumentParser, *, inputs: bool = True) -> None:
    """Flags mirroring :class:`RunConfig`; defaults are ``None`` so a config file can fill them."""
    p.add_argument("--config", help="JSON file with RunConfig fields; explicit flags override it")
    if inputs:
        p.add_argument("--systole-cloud")
        p.add_argument("--diastole-cloud")
        p.add_argument("--systole-centerline")
        p.add_argument("--diastole-centerline")
    g = p.add_argument_group("segmentation")
    g.add_argument("--cube-edge", type=float, help="cube edge l (default: 6 x median point spacing)")
    g.add_argument("--cube-epsilon", type=float, help="face threshold (default: l/4)")
    g.add_argument("--face-rule", choices=("exit", "any"))
    g = p.add_argument_group("alignment")
    g.add_argument("--method", choices=METHODS)
    g.add_argument("--softdtw-mode", choices=SOFTDTW_MODES)
    g.add_argument("--gamma", type=float)
    g.add_argument("--step-size", type=float)
    g.add_argument("--iterations", type=int)
    g.add_argument("--smoothness-weight", type=float)
    g.add_argument("--momentum", type=float)
    g = p.add_argument_group("transfer")
    g.add_argument("--cuboid-length", type=float)
    g.add_argument("--cuboid-width", type=float)
    p.add_argument("--normalize", action="store_true", default=None,
                   help="work in the unit cube of the two vessel clouds' joint bounding box")
    p.add_argument("--seed", type=int)


def _config(args) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {args.config}: {exc}") from None
    cfg = RunConfig.from_dict(data)
    for name in vars(cfg):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_segment(args) -> int:
    cfg = _config(args)
    cl = read_centerline(args.centerline)
    cl = Centerline(cl.points)
    normalizer = None
    if cfg.normalize:
        normalizer = make_normalizer(cfg, read_cloud(cfg.systole_cloud), read_cloud(cfg.diastole_cloud))
    seg = segment_stage(cl, cfg, normalizer)
    write_centerline(args.out, seg)
    counts = {a.value: sum(1 for x in seg.attributes if x is a) for a in type(seg.attributes[0])}
    _emit({"segments": seg.segment_count, "attributes": counts, "out": args.out})
    return 0


def cmd_align(args) -> int:
    cfg = _config(args)
    if cfg.systole_centerline is None or cfg.diastole_centerline is None:
        raise ConfigError("align needs --systole-centerline and --diastole-centerline")
    normalizer = None
    if cfg.normalize:
        normalizer = make_normalizer(cfg, read_cloud(cfg.systole_cloud), read_cloud(cfg.diastole_cloud))
    sys_cl = segment_stage(read_centerline(cfg.systole_centerline), cfg, normalizer)
    dia_cl = segment_stage(read_centerline(cfg.diastole_centerline), cfg, normalizer)
    stations = align_stage(sys_cl, dia_cl, cfg, normalizer)
    write_station_field(args.out, stations.stations, stations.vectors, stations.segment_ids)
    _emit({"stations": len(stations.stations), "method": cfg.method,
           "unmatched": {"systole": stations.unmatched_systole, "diastole": stations.unmatched_diastole},
           "out": args.out})
    return 0


def cmd_synth4d(args) -> int:
    cfg = _config(args)
    if args.phases is not None:
        cfg.phases = _floats(args.phases)
    for name in ("station_field", "truth_cloud", "truth_phase", "output_dir"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    if cfg.output_dir is None:
        raise ConfigError("synth4d needs --output-dir")
    result = run_pipeline(cfg)
    _emit({"frames": [str(p) for p in result.files.frames], "manifest": str(result.files.manifest),
           "metrics": {k: {"cd_scaled": v.cd_scaled, "hd_scaled": v.hd_scaled}
                       for k, v in result.reports.items()}})
    return 0


def _recipe(args):
    if args.recipe == "random":
        return random_recipe(args.seed, args.magnitude)
    steps = []
    if args.scale is not None:
        steps.append(Scale(args.scale))
    if args.bend is not None:
        steps.append(Bend(((0.0, 0.0, 0.0), args.bend, (0.0, 0.0, 0.0))))
    if args.translate is not None:
        steps.append(Translate(args.translate))
    if not steps:
        raise ConfigError("gen needs --recipe random or at least one of --translate/--scale/--bend")
    return steps[0] if len(steps) == 1 else Compose(tuple(steps))


def cmd_gen(args) -> int:
    out = Path(args.output_dir)
    recipe = _recipe(args)
    if args.tree:
        tree = make_tree(args.tree, args.samples, args.seed, args.length)
        sys_pts = tree.points
        # bend parameter: position along the tree's longest extent
        axis = int(np.argmax(np.ptp(sys_pts, axis=0)))
        lo, span = sys_pts[:, axis].min(), np.ptp(sys_pts[:, axis])
        u = (sys_pts[:, axis] - lo) / span
        truth = recipe.apply(sys_pts, u) - sys_pts
        dia_pts = sys_pts + truth
        write_centerline(out / "systole_labels.csv", tree)
        sys_cloud = dia_cloud = None
        if args.radius:
            sys_cloud = _tree_tube(tree, args.radius, args.ring_count, args.seed)
            dia_cloud = sys_cloud + truth[_nearest(sys_pts, sys_cloud)[1]]
    else:
        ctrl = np.array(json.loads(args.controls)) if args.controls else \
            np.array([[0, 0, 0], [0.3, 0.4, 0.1], [0.7, -0.2, 0.3], [1.0, 0.1, 0.0]]) * args.length
        pair = make_pair(BezierSpec(ctrl, args.samples), recipe, args.seed,
                         radius=args.radius or None, ring_count=args.ring_count)
        sys_pts, dia_pts, truth = pair.systole.points, pair.diastole.points, pair.truth_field
        sys_cloud, dia_cloud = pair.systole_cloud, pair.diastole_cloud
    files = {
        "systole_centerline": write_cloud(out / "systole_centerline.csv", sys_pts, LOSSLESS_DIGITS),
        "diastole_centerline": write_cloud(out / "diastole_centerline.csv", dia_pts, LOSSLESS_DIGITS),
        "truth_field": write_table(out / "truth_field.csv", ["dx", "dy", "dz"], list(truth.T), LOSSLESS_DIGITS),
    }
    if sys_cloud is not None:
        files["systole_cloud"] = write_cloud(out / "systole_cloud.csv", sys_cloud, LOSSLESS_DIGITS)
        files["diastole_cloud"] = write_cloud(out / "diastole_cloud.csv", dia_cloud, LOSSLESS_DIGITS)
    manifest = {"tool": "vesselmorph", "version": __version__, "command": "gen", "seed": args.seed,
                "recipe": repr(recipe), "samples": args.samples, "tree": args.tree,
                "files": {k: Path(v).name for k, v in files.items()}}
    write_json(out / "manifest.json", manifest)
    _emit({k: str(v) for k, v in files.items()})
    return 0


def _nearest(reference, query):
    return cKDTree(reference).query(query)


def _tree_tube(tree: Centerline, radius: float, ring_count: int, seed: int) -> np.ndarray:
    parts = []
    for seg, idx in tree.segment_indices().items():
        if len(idx) >= 2:
            parts.append(tube_sample(tree.points[idx], radius, ring_count, seed + seg))
    return np.vstack(parts)


def cmd_drop(args) -> int:
    cfg = _config(args)
    cl = read_centerline(args.centerline)
    if not cl.is_segmented:
        cl = segment_stage(cl, cfg)
    cloud = read_cloud(args.cloud) if args.cloud else None
    result = drop_branches(cl, args.proportion, args.seed, cloud)
    out = Path(args.output_dir)
    write_centerline(out / "centerline.csv", result.centerline)
    if result.cloud is not None:
        write_cloud(out / "cloud.csv", result.cloud, LOSSLESS_DIGITS)
    manifest = {"tool": "vesselmorph", "version": __version__, "command": "drop", "seed": args.seed,
                "requested": args.proportion, "achieved": result.achieved,
                "dropped_segments": result.dropped_segments}
    write_json(out / "manifest.json", manifest)
    _emit(manifest)
    return 0


def cmd_eval(args) -> int:
    report = compare(read_cloud(args.a), read_cloud(args.b))
    if args.json:
        _emit(report.to_dict())
    else:
        print(report.to_text())
    return 0


def cmd_icp(args) -> int:
    source, target = read_cloud(args.source), read_cloud(args.target)
    transform, moved, history = rigid_icp(source, target, args.max_iters, args.tol)
    payload = {"rotation": transform.rotation.tolist(), "translation": transform.translation.tolist(),
               "iterations": len(history) - 1, "mse": history[-1]}
    if args.out:
        write_cloud(args.out, moved)
    if args.phase is not None:
        partial = transform.interpolate(args.phase).apply(source)
        if args.phase_out:
            write_cloud(args.phase_out, partial)
    _emit(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vesselmorph",
                                     description="Synthesize 4D vessel trees from systole and diastole point clouds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="classify and segment one centerline")
    p.add_argument("--centerline", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("align", help="estimate the centerline deformation field")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("synth4d", help="full pipeline: frames + manifest")
    _add_config_flags(p)
    p.add_argument("--station-field", help="precomputed output of `align`; skips segment/align")
    p.add_argument("--phases", help="comma-separated phases in [0, 1] (default 0,1/3,2/3,1)")
    p.add_argument("--truth-cloud")
    p.add_argument("--truth-phase", type=float)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_synth4d)

    p = sub.add_parser("gen", help="write a synthetic systole/diastole pair")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--length", type=float, default=1.0, help="overall curve size")
    p.add_argument("--controls", help="JSON list of Bezier control points")
    p.add_argument("--tree", type=int, default=0, help="generate a tree with this many segments")
    p.add_argument("--recipe", choices=("random", "explicit"), default="explicit")
    p.add_argument("--translate", type=_vec3)
    p.add_argument("--scale", type=float)
    p.add_argument("--bend", type=_vec3, help="middle control point of a quadratic offset curve")
    p.add_argument("--magnitude", type=float, default=0.1)
    p.add_argument("--radius", type=float, default=0.0, help="tube radius; 0 writes no vessel cloud")
    p.add_argument("--ring-count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("drop", help="remove whole segments to simulate invisible vessels")
    p.add_argument("--centerline", required=True)
    p.add_argument("--cloud")
    p.add_argument("--proportion", type=float, required=True)
    p.add_argument("--output-dir", required=True)
    _add_config_flags(p, inputs=False)
    p.set_defaults(func=cmd_drop)

    p = sub.add_parser("eval", help="Chamfer and Hausdorff distance between two clouds")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("icp", help="rigid ICP baseline")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--out")
    p.add_argument("--phase", type=float, help="also apply this fraction of the rigid motion")
    p.add_argument("--phase-out")
    p.set_defaults(func=cmd_icp)
    return parser


def _category(exc: BaseException) -> str:
    if isinstance(exc, StageError):
        return f"stage:{exc.stage}"
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, FormatError):
        return "format"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, (ValueError, FloatingPointError)):
        return "input"
    return "internal"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        message = " ".join(str(exc).split())
        print(f"error[{_category(exc)}]: {message}", file=sys.stderr)
        if args.verbose:
            raise
        return 2


if __name__ == "__main__":
    sys.exit(main())
