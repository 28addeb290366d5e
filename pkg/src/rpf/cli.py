"""Command-line interface.

Subcommands::

    rpf synth-scene   generate a synthetic dataset in the standard layout
    rpf evaluate      run the localization pipeline and write reports
    rpf viewpoint     ideal-retrieval sweep over neighbor rank offsets
    rpf pairs         export training pairs with ground-truth relative poses

Verbosity is controlled with the ``RPF_LOG`` environment variable
(debug/info/warning/error). All outputs are deterministic for a fixed
flag set and seed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import evaluation, figures, scene
from .errors import RpfError
from .fusion import FusionConfig
from .relpose import NoiseConfig, load_predictions
from .retrieval import load_features

log = logging.getLogger(__name__)


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--root", required=True, help="dataset root directory")
    p.add_argument("--scenes", default=None, help="comma-separated scene names (default: all)")


def _add_relpose_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--relpose", choices=["predictions", "synth"], default="synth",
                   help="relative pose source")
    p.add_argument("--predictions", default=None, help="prediction JSONL (relpose=predictions)")
    p.add_argument("--sigma-rot-deg", type=float, default=0.0, help="synth rotation noise sigma")
    p.add_argument("--sigma-dir-deg", type=float, default=0.0, help="synth direction noise sigma")
    p.add_argument("--outlier-prob", type=float, default=0.0, help="synth outlier probability")


def _add_fusion_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=5, help="number of retrieved neighbors")
    p.add_argument("--thresh-deg", type=float, default=20.0, help="inlier angle threshold")
    p.add_argument("--beta", type=float, default=1.0, help="orientation weight in the pose metric")


def _add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for all randomized choices")
    p.add_argument("--jobs", type=int, default=1, help="parallel query workers")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rpf", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="run the localization pipeline")
    _add_dataset_args(p_eval)
    p_eval.add_argument("--retrieval", choices=["features", "oracle"], default="oracle",
                        help="neighbor retrieval mode")
    p_eval.add_argument("--features", default=None, help="feature matrix file (retrieval=features)")
    p_eval.add_argument("--ids", default=None, help="feature id list (retrieval=features)")
    _add_relpose_args(p_eval)
    _add_fusion_args(p_eval)
    _add_common_args(p_eval)

    p_view = sub.add_parser("viewpoint", help="ideal-retrieval viewpoint sweep")
    _add_dataset_args(p_view)
    _add_relpose_args(p_view)
    _add_fusion_args(p_view)
    p_view.add_argument("--set-size", type=int, default=5, help="images per viewpoint set")
    p_view.add_argument("--interval", type=int, default=50, help="rank spacing between sets")
    p_view.add_argument("--count", type=int, default=8, help="number of viewpoint sets")
    _add_common_args(p_view)

    p_pairs = sub.add_parser("pairs", help="export training pairs")
    _add_dataset_args(p_pairs)
    p_pairs.add_argument("--max-dist-m", type=float, default=0.5, help="partner distance bound")
    p_pairs.add_argument("--max-angle-deg", type=float, default=40.0, help="partner angle bound")
    p_pairs.add_argument("--seed", type=int, default=0)
    p_pairs.add_argument("--out", required=True, help="output directory")

    p_synth = sub.add_parser("synth-scene", help="generate a synthetic dataset")
    p_synth.add_argument("--out", required=True, help="dataset root to write into")
    p_synth.add_argument("--scene", default="synth", help="scene name")
    p_synth.add_argument("--n-train", type=int, default=400)
    p_synth.add_argument("--n-test", type=int, default=50)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--box-m", type=float, default=4.0, help="side length of the room box")
    p_synth.add_argument("--step-m", type=float, default=0.08, help="trajectory step sigma")
    p_synth.add_argument("--step-deg", type=float, default=5.0, help="trajectory rotation sigma")
    return parser


def _validate(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    if getattr(args, "relpose", None) == "predictions" and not args.predictions:
        parser.error("--predictions is required when --relpose predictions")
    if getattr(args, "retrieval", None) == "features":
        if not args.features or not args.ids:
            parser.error("--features and --ids are required when --retrieval features")
    for attr, name in (("n", "--n"), ("jobs", "--jobs"), ("set_size", "--set-size"),
                       ("interval", "--interval"), ("count", "--count")):
        if getattr(args, attr, 1) < 1:
            parser.error(f"{name} must be positive")
    for attr, name in (("n_train", "--n-train"), ("n_test", "--n-test")):
        if getattr(args, attr, 0) < 0:
            parser.error(f"{name} must be non-negative")


def _scene_names(args):
    return [s for s in args.scenes.split(",") if s] if args.scenes else None


def _make_sources(args):
    if args.relpose == "predictions":
        relpose_source = evaluation.PredictionSource(load_predictions(args.predictions))
    else:
        relpose_source = evaluation.SynthSource(
            NoiseConfig(args.sigma_rot_deg, args.sigma_dir_deg, args.outlier_prob, args.seed)
        )
    return relpose_source


def cmd_evaluate(args) -> int:
    db = scene.load_scenes(args.root, _scene_names(args))
    queries = db.subset(split="test").records
    if args.retrieval == "features":
        retrieval_source = evaluation.FeatureRetrieval(load_features(args.features, args.ids))
    else:
        retrieval_source = evaluation.PoseOracleRetrieval(args.beta)
    cfg = FusionConfig(n_neighbors=args.n, angle_thresh_deg=args.thresh_deg)
    reports = evaluation.run_pipeline(
        db, queries, retrieval_source, _make_sources(args), cfg, jobs=args.jobs
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_text(out / "report.json", evaluation.scene_reports_to_json(reports))
    evaluation.write_scene_reports_csv(reports, out / "summary.csv")
    if not args.no_figures:
        figures.scene_medians_figure(reports, out / "medians.png")
    for rep in reports:
        pos = "n/a" if rep.median_position_m is None else f"{rep.median_position_m:.3f}m"
        ori = "n/a" if rep.median_orientation_deg is None else f"{rep.median_orientation_deg:.2f}deg"
        print(f"{rep.scene}: {pos}, {ori} ({rep.n_queries} queries, {rep.n_failures} failed)")
    return 0


def cmd_viewpoint(args) -> int:
    db = scene.load_scenes(args.root, _scene_names(args))
    queries = db.subset(split="test").records
    cfg = FusionConfig(n_neighbors=max(2, args.set_size), angle_thresh_deg=args.thresh_deg)
    report = evaluation.run_viewpoint_experiment(
        db,
        queries,
        _make_sources(args),
        cfg,
        set_size=args.set_size,
        interval=args.interval,
        count=args.count,
        beta=args.beta,
        jobs=args.jobs,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_text(out / "viewpoint.json", evaluation.viewpoint_report_to_json(report))
    evaluation.write_viewpoint_csv(report, out / "viewpoint.csv")
    if not args.no_figures:
        figures.viewpoint_figure(report, out / "viewpoint.png")
    for scene_name, reason in report.skipped:
        print(f"skipped {scene_name}: {reason}")
    for rep in report.scenes:
        cols = ", ".join(
            "n/a" if pos is None else f"{pos:.3f}m/{ori:.2f}deg" for pos, ori in rep.medians
        )
        print(f"{rep.scene}: {cols}")
    return 0


def cmd_pairs(args) -> int:
    db = scene.load_scenes(args.root, _scene_names(args))
    pairs = scene.generate_pairs(db, args.max_dist_m, args.max_angle_deg, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene.write_pairs(pairs, out / "pairs.jsonl")
    print(f"wrote {len(pairs)} pairs to {out / 'pairs.jsonl'}")
    return 0


def cmd_synth_scene(args) -> int:
    db = scene.synth_scene(
        args.scene,
        args.n_train,
        args.n_test,
        seed=args.seed,
        box_m=args.box_m,
        step_m=args.step_m,
        step_deg=args.step_deg,
    )
    scene.write_scene(db, args.out)
    print(f"wrote scene {args.scene!r} ({args.n_train} train / {args.n_test} test) to {args.out}")
    return 0


_COMMANDS = {
    "evaluate": cmd_evaluate,
    "viewpoint": cmd_viewpoint,
    "pairs": cmd_pairs,
    "synth-scene": cmd_synth_scene,
}


def main(argv=None) -> int:
    level = os.environ.get("RPF_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        return _COMMANDS[args.command](args)
    except RpfError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
