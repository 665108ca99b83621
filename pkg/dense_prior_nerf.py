#!/usr/bin/env python3
"""
Dense depth prior NeRF pipeline.

Entry point for every stage, each reading and writing artifacts under one run directory:

    generate-scene     synthesize a room and render train/test views
    simulate-sparse    SfM-like sparse depth for the training views
    train-completion   train the depth completion network on procedural rooms
    export-priors      dense depth + uncertainty priors for the training views
    train-nerf         optimize the radiance field
    render             render views of a trained field
    evaluate           metrics tables and depth-error images on the test views
    density-sweep      full method at several sparse densities
    ablation-study     train and evaluate every method variant
    select-frames      keep the sharpest frame per window of a captured sequence

Usage:
    python dense_prior_nerf.py generate-scene --workdir runs/desk --seed 3
    python dense_prior_nerf.py train-nerf --workdir runs/desk --priors completed
    python dense_prior_nerf.py train-nerf --workdir runs/desk --name baseline --lambda 0

`--lambda 0` without `--sampling` or `--ablation` trains the plain NeRF baseline:
no depth term, stratified sampling, no prior files needed.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from src.config.settings import ABLATIONS, SAMPLING_MODES, Settings, load_settings, workdir
from src.jobs.evaluate import evaluate_views, optimize_test_code, save_render
from src.jobs.frames import list_frames, select_frames_job
from src.jobs.priors import PRIOR_MODES, export_priors_job, train_completion_job
from src.jobs.simulate import generate_scene_job, simulate_sparse_job
from src.jobs.sweep import ablation_study, density_sweep
from src.nerf.trainer import load_trained_field, scene_bounds, train
from src.render.pixel import render_image
from src.utils.logging_setup import get_pipeline_logger, log_error_with_context, setup_logging
from src.utils.storage import ArtifactStore

SEEDED_SECTIONS = ("scene", "sparse", "completion", "radiance", "train", "evaluation")


def build_overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """Translate command-line flags into per-section settings overrides."""
    overrides: Dict[str, Dict[str, Any]] = {}
    if args.seed is not None:
        for section in SEEDED_SECTIONS:
            overrides.setdefault(section, {})["seed"] = args.seed
    train_flags = {
        "depth_loss_weight": getattr(args, "depth_loss_weight", None),
        "iterations": getattr(args, "iterations", None),
        "ablation": getattr(args, "ablation", None),
        "sampling": getattr(args, "sampling", None),
    }
    for key, value in train_flags.items():
        if value is not None:
            overrides.setdefault("train", {})[key] = value
    if train_flags["depth_loss_weight"] == 0 and train_flags["sampling"] is None and train_flags["ablation"] is None:
        # without the depth term the plain baseline also drops prior-guided sampling
        overrides["train"]["sampling"] = "stratified"
    if getattr(args, "samples", None) is not None:
        overrides.setdefault("train", {})["samples_per_ray"] = args.samples
    return overrides


def cmd_generate_scene(args: argparse.Namespace, settings: Settings, store: ArtifactStore) -> None:
    summary = generate_scene_job(settings, store)
    print(f"scene {summary['seed']}: {summary['objects']} objects, "
          f"{summary['train_views']} train / {summary['test_views']} test views -> {store.root}")


def cmd_simulate_sparse(args: argparse.Namespace, settings: Settings, store: ArtifactStore) -> None:
    summary = simulate_sparse_job(settings, store, tag=args.tag, density=args.density)
    print(f"sparse '{args.tag}': target {summary['target_count']} points/view, "
          f"valid {summary['valid_counts']}, sparse RMSE {summary['sparse_rmse']:.4f} m")


def cmd_train_completion(args: argparse.Namespace, settings: Settings, store: ArtifactStore) -> None:
    summary = train_completion_job(settings, store)
    print(f"completion network: {summary['samples']} samples, best epoch {summary['best_epoch']}, "
          f"val GNLL {summary['val_loss']:.4f}")


def cmd_export_priors(args: argparse.Namespace, settings: Settings, store: ArtifactStore) -> None:
    row = export_priors_job(settings, store, args.sparse_tag, args.prior_tag, mode=args.mode)
    print(f"priors '{args.prior_tag}': dense RMSE {row['dense_rmse']:.4f} m, "
          f"coverage@1 {row['coverage_1']:.3f}")


def cmd_train_nerf(args: argparse.Namespace, settings: Settings, store: ArtifactStore) -> None:
    dataset = store.load_dataset()
    views = dataset.train
    if settings.train.effective_depth_loss_weight == 0 and settings.train.effective_sampling == "stratified":
        # plain baseline: priors are neither sampled around nor supervised
        depths = np.zeros((len(views),) + views.shape)
        stds = np.zeros_like(depths)
    else:
        depths, stds = store.load_priors(args.priors, len(views))
    state = train(
        views,
        depths,
        stds,
        scene_bounds(dataset.scene.room_size),
        settings,
        store.nerf_dir(args.name),
        resume=not args.no_resume,
    )
    print(f"trained '{args.name}' to iteration {state.iteration} -> {store.nerf_dir(args.name)}")


def cmd_render(args: argparse.Namespace, settings: Settings, store: ArtifactStore) -> None:
    dataset = store.load_dataset()
    views = dataset.test if args.split == "test" else dataset.train
    field_mlp, snapshot = load_trained_field(
        store.nerf_dir(args.name), scene_bounds(dataset.scene.room_size), len(dataset.train)
    )
    samples = args.samples or settings.evaluation.samples_per_ray
    indices = range(len(views)) if args.view is None else [args.view]
    output = store.eval_dir(args.name) / f"render_{args.split}"
    for index in indices:
        if not 0 <= index < len(views):
            raise ValueError(f"view {index} outside the {len(views)} {args.split} views")
        code = None
        if args.optimize_code and field_mlp.latent_size > 0:
            code = optimize_test_code(field_mlp, views, index, settings.evaluation, samples).code
        rendered = render_image(
            field_mlp, views.intrinsics, views.poses[index], views.near, views.far, samples,
            settings.evaluation.seed, code, settings.evaluation.chunk_size,
        )
        save_render(output, index, rendered, views.far)
    print(f"rendered {len(indices)} {args.split} view(s) -> {output}")


def cmd_evaluate(args: argparse.Namespace, settings: Settings, store: ArtifactStore) -> None:
    dataset = store.load_dataset()
    field_mlp, snapshot = load_trained_field(
        store.nerf_dir(args.name), scene_bounds(dataset.scene.room_size), len(dataset.train)
    )
    table = evaluate_views(
        field_mlp,
        dataset.test,
        settings.evaluation,
        args.samples or settings.evaluation.samples_per_ray,
        store.eval_dir(args.name),
        optimize_codes=not args.no_code_opt,
    )
    print(table.to_string(index=False))


def cmd_density_sweep(args: argparse.Namespace, settings: Settings, store: ArtifactStore) -> None:
    table = density_sweep(settings, store, args.densities, include_sparse_baseline=args.with_sparse_baseline)
    print(table.to_string(index=False))


def cmd_ablation_study(args: argparse.Namespace, settings: Settings, store: ArtifactStore) -> None:
    table = ablation_study(settings, store, args.variants, sparse_tag=args.sparse_tag)
    print(table.to_string(index=False))


def cmd_select_frames(args: argparse.Namespace, settings: Settings, store: ArtifactStore) -> None:
    selected = select_frames_job(list_frames(args.input), args.window, args.output)
    for path in selected:
        print(path)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML experiment file")
    common.add_argument("--workdir", type=Path, default=None, help="Run directory (default: $DPNERF_WORKDIR or runs/)")
    common.add_argument("--seed", type=int, default=None, help="Seed applied to every stage")
    common.add_argument("--log-level", type=str, default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(
        description="Dense depth prior NeRF on synthetic desk-scale rooms",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python dense_prior_nerf.py generate-scene --workdir runs/desk
  python dense_prior_nerf.py simulate-sparse --workdir runs/desk
  python dense_prior_nerf.py train-completion --workdir runs/desk
  python dense_prior_nerf.py export-priors --workdir runs/desk
  python dense_prior_nerf.py train-nerf --workdir runs/desk
  python dense_prior_nerf.py evaluate --workdir runs/desk
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-scene", parents=[common], help="Synthesize a room and render its views")
    p.set_defaults(handler=cmd_generate_scene)

    p = sub.add_parser("simulate-sparse", parents=[common], help="Simulate sparse depth")
    p.add_argument("--tag", default="sfm")
    p.add_argument("--density", type=float, default=None, help="Fraction of valid pixels per map")
    p.set_defaults(handler=cmd_simulate_sparse)

    p = sub.add_parser("train-completion", parents=[common], help="Train the depth completion network")
    p.set_defaults(handler=cmd_train_completion)

    p = sub.add_parser("export-priors", parents=[common], help="Write dense depth priors")
    p.add_argument("--sparse-tag", default="sfm")
    p.add_argument("--prior-tag", default="completed")
    p.add_argument("--mode", choices=PRIOR_MODES, default="completion")
    p.set_defaults(handler=cmd_export_priors)

    p = sub.add_parser("train-nerf", parents=[common], help="Optimize the radiance field")
    p.add_argument("--name", default="full")
    p.add_argument("--priors", default="completed", help="Prior set tag")
    p.add_argument("--lambda", dest="depth_loss_weight", type=float, default=None, help="Depth loss weight")
    p.add_argument("--ablation", choices=ABLATIONS, default=None)
    p.add_argument("--sampling", choices=SAMPLING_MODES, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--samples", type=int, default=None, help="Samples per ray")
    p.add_argument("--no-resume", action="store_true", help="Ignore an existing checkpoint")
    p.set_defaults(handler=cmd_train_nerf)

    p = sub.add_parser("render", parents=[common], help="Render views of a trained field")
    p.add_argument("--name", default="full")
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--view", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--optimize-code", action="store_true", help="Fit a latent code to each view first")
    p.set_defaults(handler=cmd_render)

    p = sub.add_parser("evaluate", parents=[common], help="Score a trained field on the test views")
    p.add_argument("--name", default="full")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--no-code-opt", action="store_true", help="Skip test-time latent code optimization")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("density-sweep", parents=[common], help="Full method at several sparse densities")
    p.add_argument("--densities", type=float, nargs="+", default=None)
    p.add_argument("--with-sparse-baseline", action="store_true")
    p.set_defaults(handler=cmd_density_sweep)

    p = sub.add_parser("ablation-study", parents=[common], help="Train and evaluate method variants")
    p.add_argument("--variants", nargs="+", choices=ABLATIONS, default=list(ABLATIONS))
    p.add_argument("--sparse-tag", default="sfm")
    p.set_defaults(handler=cmd_ablation_study)

    p = sub.add_parser("select-frames", parents=[common], help="Sharpest frame per window")
    p.add_argument("--input", type=Path, required=True, help="Directory of PNG/PPM frames")
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--output", type=Path, default=None)
    p.set_defaults(handler=cmd_select_frames)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns the process exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        settings = load_settings(args.config, build_overrides(args))
    except (OSError, ValueError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return 1

    setup_logging(
        log_level=args.log_level or settings.logging.log_level,
        log_dir=settings.logging.log_dir,
        file_logging=settings.logging.enable_file_logging,
    )
    logger = get_pipeline_logger("cli")
    store = ArtifactStore(args.workdir or workdir())

    try:
        args.handler(args, settings, store)
    except (FileNotFoundError, ValueError, RuntimeError) as e:
        log_error_with_context(e, {"command": args.command, "workdir": str(store.root)}, "cli")
        print(f"{args.command} failed: {e}", file=sys.stderr)
        return 1
    logger.info("Command finished", command=args.command)
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nInterrupted")
        sys.exit(130)
