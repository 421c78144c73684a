"""Weakly supervised whole-slide classification toolkit.

Tiles slide rasters into patches, stores per-patch features in a compact
binary bag format, trains a gated-attention multiple-instance model with
k-fold cross-validation, and renders attention heatmaps.
"""

from .fbag import FbagError, FeatureBag, read_bag, write_bag
from .handcrafted import FEATURE_DIM, extract_handcrafted
from .heatmap import HeatmapError, HeatmapParams, normalize_attention, render_heatmap
from .manifest import (
    LabeledDataset,
    Manifest,
    ManifestError,
    SlideRecord,
    TaskError,
    TaskSpec,
    load_dataset,
    parse_manifest,
    resolve_task,
)
from .metrics import (
    ConfusionMatrix,
    MetricSet,
    RocCurve,
    auroc,
    classification_metrics,
    confusion,
    roc_curve,
)
from .milnet import (
    AdamState,
    BagOutput,
    MilError,
    MilModel,
    adam_step,
    bag_cross_entropy,
    forward,
    init_model,
    instance_loss,
    load_model,
    loss_and_backward,
    save_model,
)
from .splits import Round, SplitError, SplitPlan, build_split_plan, plan_from_dict, plan_to_json
from .synthetic import make_synthetic_bags, synthetic_task, write_synthetic_dataset
from .tiler import (
    PatchCoord,
    TilerError,
    TissueMask,
    build_tissue_mask,
    crop_patch,
    otsu_threshold,
    tile_grid,
)
from .training import (
    BagStore,
    CVReport,
    TrainConfig,
    TrainingError,
    run_cross_validation,
    train_fold,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BagOutput",
    "BagStore",
    "ConfusionMatrix",
    "CVReport",
    "FbagError",
    "FeatureBag",
    "FEATURE_DIM",
    "HeatmapError",
    "HeatmapParams",
    "LabeledDataset",
    "Manifest",
    "ManifestError",
    "MetricSet",
    "MilError",
    "MilModel",
    "PatchCoord",
    "RocCurve",
    "Round",
    "SlideRecord",
    "SplitError",
    "SplitPlan",
    "TaskError",
    "TaskSpec",
    "TilerError",
    "TissueMask",
    "TrainConfig",
    "TrainingError",
    "adam_step",
    "auroc",
    "bag_cross_entropy",
    "build_split_plan",
    "build_tissue_mask",
    "classification_metrics",
    "confusion",
    "crop_patch",
    "extract_handcrafted",
    "forward",
    "init_model",
    "instance_loss",
    "load_dataset",
    "load_model",
    "loss_and_backward",
    "make_synthetic_bags",
    "normalize_attention",
    "otsu_threshold",
    "parse_manifest",
    "plan_from_dict",
    "plan_to_json",
    "read_bag",
    "render_heatmap",
    "resolve_task",
    "roc_curve",
    "run_cross_validation",
    "save_model",
    "synthetic_task",
    "tile_grid",
    "train_fold",
    "write_bag",
    "write_synthetic_dataset",
]
