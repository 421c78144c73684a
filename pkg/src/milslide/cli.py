"""Command-line entry point.

Subcommands cover the pipeline end to end: tile, extract, splits, train,
evaluate, heatmap. Each accepts an optional JSON config file; explicit
flags override config values, and MILCLI_SEED overrides a config seed
(but not a --seed flag). Exit codes: 0 ok, 1 validation error, 2 I/O
error. Diagnostics go to stderr, a one-line JSON summary to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import metrics
from .fbag import FeatureBag, read_bag, write_bag
from .handcrafted import FEATURE_DIM, extract_handcrafted
from .heatmap import HeatmapParams, normalize_attention, render_heatmap
from .jsonio import dumps_stable
from .manifest import TaskSpec, load_dataset
from .milnet import forward, load_model
from .splits import build_split_plan, plan_to_json
from .tiler import build_tissue_mask, crop_patch, tile_grid
from .training import TrainConfig, run_cross_validation, report_to_json

DEFAULT_SEED = 42
DEFAULT_K = 10
DEFAULT_PATCH = 256
DEFAULT_TISSUE_FRAC = 0.5


class CliError(ValueError):
    pass


def _read_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def _write_image(arr: np.ndarray, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="RGB").save(str(path), format="PNG")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        # missing config is a usage problem, not an I/O failure
        raise CliError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CliError(f"config {path} must hold a JSON object")
    return doc


def _pick(flag_value, config: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _resolve_seed(flag_value, config: dict) -> int:
    """Precedence: --seed flag, then MILCLI_SEED, then config, then 42."""
    if flag_value is not None:
        return int(flag_value)
    env = os.environ.get("MILCLI_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise CliError(f"MILCLI_SEED must be an integer, got {env!r}") from exc
    if "seed" in config:
        return int(config["seed"])
    return DEFAULT_SEED


def _summary(**fields) -> None:
    sys.stdout.write(dumps_stable(fields))


def _task_from_config(config: dict) -> TaskSpec:
    doc = config.get("task")
    if not isinstance(doc, dict):
        raise CliError("config must define a 'task' object with positive_labels/negative_labels")
    try:
        return TaskSpec(
            name=str(doc.get("name", "task")),
            positive_labels=frozenset(doc.get("positive_labels", ())),
            negative_labels=frozenset(doc.get("negative_labels", ())),
            negative_catch_all=bool(doc.get("negative_catch_all", False)),
        )
    except ValueError as exc:
        raise CliError(f"bad task config: {exc}") from exc


def _train_config(config: dict, seed: int) -> TrainConfig:
    doc = dict(config.get("train", {}))
    doc.pop("seed", None)
    try:
        return TrainConfig(seed=seed, **doc)
    except TypeError as exc:
        raise CliError(f"bad train config: {exc}") from exc


# ---------------------------------------------------------------- commands


def _cmd_tile(args) -> int:
    config = _load_config(args.config)
    patch = int(_pick(args.patch_size, config, "patch_size", DEFAULT_PATCH))
    frac = float(_pick(args.min_tissue_frac, config, "min_tissue_frac", DEFAULT_TISSUE_FRAC))
    scale = int(_pick(args.mask_scale, config, "mask_scale", 1))
    image = _read_image(args.image)
    mask = build_tissue_mask(image, scale)
    if mask.degenerate:
        sys.stderr.write(f"warning: degenerate saturation histogram in {args.image}; mask is all background\n")
    coords = tile_grid(image.shape[1], image.shape[0], patch, mask, frac)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(f"{c.x},{c.y},{c.patch_size}\n" for c in coords), encoding="utf-8")
    _summary(command="tile", image=str(args.image), n_patches=len(coords),
             patch_size=patch, degenerate_mask=mask.degenerate, out=str(out))
    return 0


def _cmd_extract(args) -> int:
    config = _load_config(args.config)
    patch = int(_pick(args.patch_size, config, "patch_size", DEFAULT_PATCH))
    frac = float(_pick(args.min_tissue_frac, config, "min_tissue_frac", DEFAULT_TISSUE_FRAC))
    scale = int(_pick(args.mask_scale, config, "mask_scale", 1))
    slide_id = args.slide_id or Path(args.image).stem
    image = _read_image(args.image)
    mask = build_tissue_mask(image, scale)
    if mask.degenerate:
        sys.stderr.write(f"warning: degenerate saturation histogram in {args.image}; mask is all background\n")
    coords = tile_grid(image.shape[1], image.shape[0], patch, mask, frac)
    if not coords:
        raise CliError(f"no tissue patches found in {args.image} at patch_size={patch}, min_tissue_frac={frac}")
    features = np.empty((len(coords), FEATURE_DIM), dtype=np.float64)
    for i, c in enumerate(coords):
        features[i] = extract_handcrafted(crop_patch(image, c))
    bag = FeatureBag(slide_id=slide_id, patch_size=patch, coords=tuple(coords), features=features)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_bag(bag, out)
    _summary(command="extract", slide_id=slide_id, n_patches=len(coords),
             dim=FEATURE_DIM, patch_size=patch, out=str(out))
    return 0


def _cmd_splits(args) -> int:
    config = _load_config(args.config)
    k = int(_pick(args.k, config, "k", DEFAULT_K))
    seed = _resolve_seed(args.seed, config)
    raw = Path(args.labels).read_text(encoding="utf-8").split()
    try:
        labels = [int(tok) for tok in raw]
    except ValueError as exc:
        raise CliError(f"{args.labels}: labels must be integers 0 or 1: {exc}") from exc
    if any(l not in (0, 1) for l in labels):
        raise CliError(f"{args.labels}: labels must be 0 or 1")
    if args.n is not None and args.n != len(labels):
        raise CliError(f"--n {args.n} does not match {len(labels)} labels in {args.labels}")
    plan = build_split_plan(labels, k, seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(plan_to_json(plan), encoding="utf-8")
    _summary(command="splits", n=len(labels), k=k, seed=seed, out=str(out))
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args.config)
    manifest = _pick(args.manifest, config, "manifest", None)
    if manifest is None:
        raise CliError("train needs a manifest (flag --manifest or config key 'manifest')")
    out_dir = Path(_pick(args.out_dir, config, "out_dir", "."))
    k = int(_pick(args.k, config, "k", DEFAULT_K))
    seed = _resolve_seed(args.seed, config)
    threads = int(args.threads)
    if threads < 1:
        raise CliError(f"--threads must be >= 1, got {threads}")
    if threads > 1:
        sys.stderr.write("note: rounds currently run sequentially; results do not depend on --threads\n")
    task = _task_from_config(config)
    cfg = _train_config(config, seed)
    dataset = load_dataset(manifest, task)
    plan = build_split_plan(dataset.labels, k, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "splits.json").write_text(plan_to_json(plan), encoding="utf-8")
    report = run_cross_validation(dataset, k, cfg, checkpoint_dir=out_dir, plan=plan)
    (out_dir / "report.json").write_text(report_to_json(report), encoding="utf-8")
    pm = report.pooled_metrics
    _summary(command="train", task=task.name, n=len(dataset), k=k, seed=seed,
             auroc=pm.auroc, f1=pm.f1, precision=pm.precision, recall=pm.recall,
             specificity=pm.specificity, out_dir=str(out_dir))
    return 0


def _scores_from_report(path: str) -> tuple[list[float], list[int], float]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        scores = [float(s) for s in doc["pooled_scores"]]
        labels = [int(l) for l in doc["pooled_labels"]]
        threshold = float(doc["config"]["threshold"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{path} is not a cross-validation report: {exc}") from exc
    return scores, labels, threshold


def _cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    if (args.report is None) == (args.model is None):
        raise CliError("evaluate needs exactly one of --report or --model")
    if args.report is not None:
        scores, labels, report_threshold = _scores_from_report(args.report)
        threshold = float(args.threshold) if args.threshold is not None else report_threshold
        source = str(args.report)
    else:
        manifest = _pick(args.manifest, config, "manifest", None)
        if manifest is None:
            raise CliError("evaluate --model needs a manifest (flag --manifest or config key 'manifest')")
        task = _task_from_config(config)
        dataset = load_dataset(manifest, task)
        model = load_model(args.model)
        scores, labels = [], []
        for item in dataset.items:
            scores.append(float(forward(model, read_bag(item.bag_path)).probs[1]))
            labels.append(item.label)
        threshold = float(args.threshold) if args.threshold is not None else 0.5
        source = str(args.model)
    curve = metrics.roc_curve(scores, labels)
    auc = metrics.auroc(scores, labels)
    ms = metrics.classification_metrics(metrics.confusion(scores, labels, threshold), auc, threshold)
    result = {
        "source": source,
        "n": len(scores),
        "threshold": ms.threshold,
        "auroc": ms.auroc,
        "f1": ms.f1,
        "precision": ms.precision,
        "recall": ms.recall,
        "specificity": ms.specificity,
        "undefined": list(ms.undefined),
    }
    if args.out is not None:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(dumps_stable(result), encoding="utf-8")
    if args.roc_out is not None:
        roc = Path(args.roc_out)
        roc.parent.mkdir(parents=True, exist_ok=True)
        roc.write_text(metrics.roc_points_text(curve), encoding="utf-8")
    _summary(command="evaluate", **result)
    return 0


def _cmd_heatmap(args) -> int:
    config = _load_config(args.config)
    try:
        params = HeatmapParams(
            clip_lo=float(_pick(args.clip_lo, config, "clip_lo", 1.0)),
            clip_hi=float(_pick(args.clip_hi, config, "clip_hi", 99.0)),
            max_alpha=float(_pick(args.max_alpha, config, "max_alpha", 0.6)),
            thumbnail_scale=float(_pick(args.scale, config, "thumbnail_scale", 1.0)),
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    model = load_model(args.model)
    bag = read_bag(args.bag)
    attention = forward(model, bag).attention
    values = normalize_attention(attention, params)
    thumb = _read_image(args.thumb)
    rendered = render_heatmap(thumb, bag.coords, values, params)
    out = Path(args.out) if args.out else Path(_pick(None, config, "out_dir", ".")) / "heatmaps" / f"{bag.slide_id}.png"
    _write_image(rendered, out)
    _summary(command="heatmap", slide_id=bag.slide_id, n_patches=bag.n_patches,
             width=int(thumb.shape[1]), height=int(thumb.shape[0]), out=str(out))
    return 0


# ------------------------------------------------------------------ parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="milcli", description="Weakly supervised slide classification pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")

    p = sub.add_parser("tile", help="detect tissue and write patch coordinates as x,y,patch_size lines")
    common(p)
    p.add_argument("--image", required=True, help="RGB raster image")
    p.add_argument("--patch-size", type=int, dest="patch_size")
    p.add_argument("--min-tissue-frac", type=float, dest="min_tissue_frac")
    p.add_argument("--mask-scale", type=int, dest="mask_scale", help="full-res pixels per mask pixel")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tile)

    p = sub.add_parser("extract", help="tile an image and write a feature bag of handcrafted descriptors")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--slide-id", dest="slide_id", help="defaults to the image filename stem")
    p.add_argument("--patch-size", type=int, dest="patch_size")
    p.add_argument("--min-tissue-frac", type=float, dest="min_tissue_frac")
    p.add_argument("--mask-scale", type=int, dest="mask_scale")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("splits", help="build a deterministic stratified split plan")
    common(p)
    p.add_argument("--labels", required=True, help="text file with one 0/1 label per line")
    p.add_argument("--n", type=int, help="expected item count (cross-check)")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="splits.json")
    p.set_defaults(func=_cmd_splits)

    p = sub.add_parser("train", help="run k-fold cross-validation training")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="compute metrics from a report or by scoring bags with a checkpoint")
    common(p)
    p.add_argument("--report", help="report.json from a training run")
    p.add_argument("--model", help="checkpoint to score a manifest with")
    p.add_argument("--manifest")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", help="write the metrics JSON here as well")
    p.add_argument("--roc-out", dest="roc_out", help="write ROC points as two-column text")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("heatmap", help="render attention over a thumbnail as a red overlay")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--bag", required=True)
    p.add_argument("--thumb", required=True, help="thumbnail raster of the same slide")
    p.add_argument("--out", help="defaults to <out_dir>/heatmaps/<slide_id>.png")
    p.add_argument("--scale", type=float, help="full-res pixels per thumbnail pixel")
    p.add_argument("--clip-lo", type=float, dest="clip_lo")
    p.add_argument("--clip-hi", type=float, dest="clip_hi")
    p.add_argument("--max-alpha", type=float, dest="max_alpha")
    p.set_defaults(func=_cmd_heatmap)
    return parser


def run_cli(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, nonzero for usage errors
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
