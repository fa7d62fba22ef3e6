"""Command-line front-end: crop, extract, fuse, select, train, eval, bench, synth.

A TOML config file may preload any flag (top-level keys, overridden by a
per-command table); explicit command-line flags win over the config.
Errors derived from VraError exit nonzero with a one-line JSON payload on
stderr so callers can parse failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from . import __version__, datamodel, evaluation, fusion, preprocess, selection, svr, synth
from .errors import ConfigError, SchemaError, VraError

log = logging.getLogger("vrabench")


def _load_config(path: str | None, command: str) -> dict:
    if not path:
        return {}
    try:
        payload = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    merged = {k: v for k, v in payload.items() if not isinstance(v, dict)}
    merged.update(payload.get(command, {}))
    return {k.replace("-", "_"): v for k, v in merged.items()}


def _float_list(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _design_from_files(features_path, manifest_path) -> tuple[fusion.DesignMatrix, list]:
    records = datamodel.load_manifest(manifest_path)
    vectors = datamodel.load_consolidated(features_path)
    return fusion.consolidate(vectors, records), records


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    meta = synth.write_benchmark_dataset(args.out, args.seed)
    print(f"synth: wrote {meta['n_videos']} videos under {args.out} (seed {args.seed})")
    return 0


def cmd_crop(args) -> int:
    records = datamodel.load_manifest(args.manifest)
    boxes_dir = Path(args.boxes)
    videos_root = Path(args.videos)
    out_root = Path(args.out)
    regions: dict[str, preprocess.CropRegion] = {}
    done = 0
    for rec in records:
        if rec.facial_id_pair not in regions:
            bundle = boxes_dir / f"{rec.facial_id_pair}.json"
            target_id, boxes = datamodel.load_box_bundle(bundle)
            regions[rec.facial_id_pair] = preprocess.build_crop_region(
                boxes, args.factor, args.frame_width, args.frame_height,
                source_video_id=target_id,
                enlarge_after_union=args.order == "union-first")
        region = regions[rec.facial_id_pair]
        src = videos_root / rec.path
        dst = out_root / (rec.video_id if args.format == "png" else f"{rec.video_id}.mp4")
        n = preprocess.crop_video_file(src, dst, region, fmt=args.format,
                                       stride=args.stride)
        done += 1
        log.info("cropped %s: %d frames -> %s", rec.video_id, n, dst)
    print(f"crop: {done} videos -> {out_root}")
    return 0


def _extract_one(source, model: str, video_id: str, stride: int,
                 out_path: Path) -> None:
    from . import handcrafted

    frames = preprocess.iter_video_frames(source, stride=stride)
    matrix = handcrafted.extract_video(frames, model, video_id)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    datamodel.write_features(matrix, out_path)


def cmd_extract(args) -> int:
    from . import handcrafted

    if args.model not in handcrafted.EXTRACTORS:
        raise ConfigError(f"unknown extractor {args.model!r}, "
                          f"expected one of {sorted(handcrafted.EXTRACTORS)}")
    if args.video:
        out = Path(args.out)
        if out.suffix != ".csv":
            out = out / f"{Path(args.video).stem}.csv"
        _extract_one(args.video, args.model, Path(args.video).stem, args.stride, out)
        print(f"extract: {args.video} -> {out}")
        return 0
    if not (args.manifest and args.frames):
        raise ConfigError("extract needs either --video or --manifest with --frames")
    records = datamodel.load_manifest(args.manifest)
    out_dir = Path(args.out)
    frames_root = Path(args.frames)
    for rec in records:
        source = frames_root / rec.video_id
        if not source.exists():
            source = frames_root / f"{rec.video_id}.mp4"
        _extract_one(source, args.model, rec.video_id, args.stride,
                     out_dir / f"{rec.video_id}.csv")
        log.info("extracted %s", rec.video_id)
    print(f"extract: {len(records)} videos -> {out_dir}")
    return 0


def cmd_fuse(args) -> int:
    features_dir = Path(args.features)
    files = sorted(features_dir.glob("*.csv"))
    if not files:
        raise ConfigError(f"no per-video feature CSVs under {features_dir}")
    vectors = []
    for file in files:
        matrix = datamodel.load_features(file)
        vectors.append(fusion.passthrough_vector(matrix) if args.pass_through
                       else fusion.fuse_mean_std(matrix))
    datamodel.write_consolidated(vectors, args.out)
    print(f"fuse: {len(vectors)} videos x {len(vectors[0].feature_names)} dims -> {args.out}")
    return 0


def cmd_select(args) -> int:
    design, _ = _design_from_files(args.features, args.manifest)
    config = selection.SelectionConfig(
        C=args.ranking_c, step=args.step,
        stage1_iterations=args.stage1_iterations,
        stage2_iterations=args.stage2_iterations)
    result = selection.run_selection(design.X, design.y, config, args.seed_base)
    selection.save_selection(result, args.out, feature_names=design.feature_names)
    print(f"select: k={result.k} of {design.X.shape[1]} dims -> {args.out}")
    return 0


def _apply_selection_file(design: fusion.DesignMatrix, path) -> fusion.DesignMatrix:
    result = selection.load_selection(path)
    return fusion.DesignMatrix(
        selection.apply_selection(design.X, result), design.y,
        selection.select_names(design.feature_names, result), design.video_ids)


def cmd_train(args) -> int:
    design, _ = _design_from_files(args.features, args.manifest)
    if args.selection:
        design = _apply_selection_file(design, args.selection)
    grid = svr.default_grid(args.kernel, _float_list(args.c_grid),
                            _float_list(args.gamma_grid))
    search = svr.grid_search(design.X, design.y, args.kernel, grid,
                             seed=args.seed, epsilon=args.epsilon)
    model = svr.train_svr(design.X, design.y, kernel=args.kernel, C=search.best_C,
                          gamma=search.best_gamma, epsilon=args.epsilon,
                          feature_names=design.feature_names)
    svr.save_model(model, args.out)
    print(f"train: kernel={args.kernel} C={search.best_C} gamma={search.best_gamma} "
          f"({search.criterion}) -> {args.out}")
    return 0


def _subset_by_names(design: fusion.DesignMatrix, names) -> fusion.DesignMatrix:
    if tuple(names) == design.feature_names:
        return design
    index = {n: i for i, n in enumerate(design.feature_names)}
    missing = [n for n in names if n not in index]
    if missing:
        raise SchemaError(f"feature file lacks model columns: {missing[:3]}")
    cols = [index[n] for n in names]
    return fusion.DesignMatrix(design.X[:, cols], design.y, tuple(names),
                               design.video_ids)


def cmd_eval(args) -> int:
    model = svr.load_model(args.model)
    design, records = _design_from_files(args.features, args.manifest)
    if model.feature_names:
        design = _subset_by_names(design, model.feature_names)
    preds = svr.predict(model, design.X, feature_names=design.feature_names)
    report = evaluation.evaluate_predictions(
        preds, design, records, feature_model=args.label or Path(args.features).stem)
    report.meta.update(created=_now(), tool_version=__version__)
    evaluation.save_report(report, args.out)
    if args.csv_out:
        evaluation.report_to_csv(report, args.csv_out)
    _print_summary(report, args.level)
    return 0


def cmd_bench(args) -> int:
    design, records = _design_from_files(args.features, args.manifest)
    label = args.label or Path(args.features).stem
    sel = selection.load_selection(args.selection) if args.selection else None
    if args.protocol == "inter":
        if not (args.test_features and args.test_manifest and args.params):
            raise ConfigError("inter protocol needs --test-features, --test-manifest "
                              "and --params from an intra-subset train run")
        frozen = svr.load_model(args.params)
        test_design, test_records = _design_from_files(args.test_features,
                                                       args.test_manifest)
        report = evaluation.run_inter_subset(
            design, test_design, test_records, C=frozen.C, gamma=frozen.gamma,
            kernel=frozen.kernel, epsilon=frozen.epsilon, selection=sel,
            predictor=args.predictor, feature_model=label)
    else:
        protocol = args.protocol.replace("-", "_")
        config = evaluation.BenchmarkConfig(
            kernel=args.kernel, c_grid=_float_list(args.c_grid),
            gamma_grid=_float_list(args.gamma_grid), epsilon=args.epsilon,
            predictor=args.predictor, jobs=args.jobs)
        report = evaluation.run_benchmark(design, records, protocol,
                                          iterations=args.iterations, config=config,
                                          seed_base=args.seed_base,
                                          feature_model=label, selection=sel)
    report.meta.update(created=_now(), tool_version=__version__)
    evaluation.save_report(report, args.out)
    if args.csv_out:
        evaluation.report_to_csv(report, args.csv_out)
    _print_summary(report, args.level)
    return 0


def _print_summary(report, level: str) -> None:
    agg = report.aggregate()
    block = agg["method"] if level == "method" else agg
    print(f"{report.protocol} [{report.feature_model}] {level}: "
          f"srcc={block['srcc']['mean']:.4f}({block['srcc']['std']:.3f}) "
          f"plcc={block['plcc']['mean']:.4f}({block['plcc']['std']:.3f}) "
          f"rmse={block['rmse']['mean']:.4f}({block['rmse']['std']:.3f}) "
          f"iterations={len(report.iterations)} skipped={len(report.skipped)}")


# ------------------------------------------------------------------ parser

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrabench",
        description="Realism-score benchmark pipeline for face-swap videos")
    parser.add_argument("--version", action="version", version=f"vrabench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="TOML config preloading any flag")
        p.add_argument("--verbose", action="store_true")
        return p

    p = add("synth", cmd_synth, help="generate the seeded synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("crop", cmd_crop, help="crop videos to their stable face region")
    p.add_argument("--manifest", required=True)
    p.add_argument("--boxes", required=True, help="dir of <facial_id_pair>.json box files")
    p.add_argument("--videos", required=True, help="root dir for manifest paths")
    p.add_argument("--out", required=True)
    p.add_argument("--factor", type=float, default=preprocess.DEFAULT_ENLARGE_FACTOR)
    p.add_argument("--order", choices=("enlarge-first", "union-first"),
                   default="enlarge-first")
    p.add_argument("--format", choices=("png", "mp4"), default="png")
    p.add_argument("--frame-width", type=int, default=1080)
    p.add_argument("--frame-height", type=int, default=1920)
    p.add_argument("--stride", type=int, default=1)

    p = add("extract", cmd_extract, help="run a native per-frame feature extractor")
    p.add_argument("--model", required=True, help="brisque or gmlog")
    p.add_argument("--video", help="single video file or frame dir")
    p.add_argument("--manifest")
    p.add_argument("--frames", help="root dir of cropped videos/frame dirs")
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int, default=1)

    p = add("fuse", cmd_fuse, help="pool per-frame features to video level")
    p.add_argument("--features", required=True, help="dir of per-video CSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--pass-through", action="store_true",
                   help="inputs are already video-level (one row per video)")

    p = add("select", cmd_select, help="two-stage feature selection")
    p.add_argument("--features", required=True, help="consolidated CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--step", type=int, default=selection.DEFAULT_STEP)
    p.add_argument("--stage1-iterations", type=int, default=selection.STAGE1_ITERATIONS)
    p.add_argument("--stage2-iterations", type=int, default=selection.STAGE2_ITERATIONS)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--ranking-c", type=float, default=1.0)

    p = add("train", cmd_train, help="grid-search and train the score regressor")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--selection")
    p.add_argument("--kernel", choices=("rbf", "linear"), default="rbf")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=svr.DEFAULT_EPSILON)
    p.add_argument("--c-grid", default=",".join(map(str, svr.DEFAULT_C_GRID)))
    p.add_argument("--gamma-grid", default=",".join(map(str, svr.DEFAULT_GAMMA_GRID)))

    p = add("eval", cmd_eval, help="evaluate a trained model on a feature table")
    p.add_argument("--model", required=True, help="model JSON from train")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv-out")
    p.add_argument("--label")
    p.add_argument("--level", choices=("video", "method"), default="video")

    p = add("bench", cmd_bench, help="full protocol benchmark")
    p.add_argument("--features", required=True, help="consolidated CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--protocol", choices=("facial-id", "submit-id", "inter"),
                   default="facial-id")
    p.add_argument("--iterations", type=int, default=evaluation.DEFAULT_ITERATIONS)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--kernel", choices=("rbf", "linear"), default="rbf")
    p.add_argument("--epsilon", type=float, default=svr.DEFAULT_EPSILON)
    p.add_argument("--c-grid", default=",".join(map(str, svr.DEFAULT_C_GRID)))
    p.add_argument("--gamma-grid", default=",".join(map(str, svr.DEFAULT_GAMMA_GRID)))
    p.add_argument("--predictor", choices=("svr", "random"), default="svr")
    p.add_argument("--selection", help="selection JSON to reuse")
    p.add_argument("--jobs", type=int, default=0, help="0 = logical cores")
    p.add_argument("--label")
    p.add_argument("--level", choices=("video", "method"), default="video")
    p.add_argument("--csv-out")
    p.add_argument("--test-features", help="inter protocol: test-side CSV")
    p.add_argument("--test-manifest", help="inter protocol: test-side manifest")
    p.add_argument("--params", help="inter protocol: model JSON with frozen params")
    return parser


def _probe_command_and_config(argv: list[str]) -> tuple[str | None, str | None]:
    command = None
    config = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif token.startswith("--config="):
            config = token.split("=", 1)[1]
        elif command is None and not token.startswith("-"):
            command = token
    return command, config


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    # cheap scan for --config; its values become new defaults, flags still win
    command, config_path = _probe_command_and_config(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if config_path and command in subparsers:
        config = _load_config(config_path, command)
        for action in subparsers[command]._actions:
            if action.dest in config:
                action.default = config[action.dest]
                action.required = False
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", None) == 0:
        import os
        args.jobs = os.cpu_count() or 1
    try:
        return args.fn(args)
    except VraError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "FileNotFoundError", "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
