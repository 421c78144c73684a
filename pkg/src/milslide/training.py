"""Cross-validation training harness.

Runs the k-round protocol over a labeled dataset of feature bags: each
round trains on its k-2 folds (one bag per Adam step, seeded shuffle per
epoch), early-stops on validation loss, then scores its test fold. Every
slide is scored exactly once, so pooling the per-round test scores covers
the whole dataset. Fixed seed implies a byte-identical report.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .fbag import FeatureBag, read_bag
from .jsonio import dumps_stable
from .manifest import LabeledDataset
from .milnet import (
    AdamState,
    MilModel,
    adam_step,
    bag_cross_entropy,
    forward,
    init_model,
    loss_and_backward,
    save_model,
)
from .splits import SplitPlan, build_split_plan


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one harness run; every field has a default."""

    max_epochs: int = 8
    patience: int = 2
    seed: int = 42
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    instance_loss: bool = False
    instance_weight: float = 0.3
    instance_k: int = 8
    threshold: float = 0.5
    hidden_dim: int = 512
    attention_dim: int = 256

    def __post_init__(self):
        if self.max_epochs < 1:
            raise TrainingError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise TrainingError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 < self.threshold < 1.0:
            raise TrainingError(f"threshold must be in (0,1), got {self.threshold}")
        if self.instance_k < 1:
            raise TrainingError(f"instance_k must be >= 1, got {self.instance_k}")


@dataclass
class EpochRecord:
    train_loss: float
    val_loss: float


@dataclass
class RoundResult:
    round_idx: int
    history: list[EpochRecord]
    best_epoch: int  # 1-based epoch whose parameters were kept
    test_indices: list[int]
    test_slide_ids: list[str]
    test_scores: list[float]
    test_labels: list[int]
    metrics: metrics.MetricSet | None  # None when the test fold is single-class


@dataclass
class CVReport:
    k: int
    seed: int
    config: dict
    task: str
    rounds: list[RoundResult]
    pooled_scores: list[float]  # dataset index order
    pooled_labels: list[int]
    pooled_metrics: metrics.MetricSet


class BagStore:
    """Loads bags on demand, caches them and enforces one feature dim."""

    def __init__(self, dataset: LabeledDataset):
        self._dataset = dataset
        self._bags: dict[int, FeatureBag] = {}
        self._dim: int | None = None

    @property
    def dim(self) -> int:
        if self._dim is None:
            self.bag(0)
        return self._dim

    def bag(self, index: int) -> FeatureBag:
        if index not in self._bags:
            item = self._dataset.items[index]
            bag = read_bag(item.bag_path)
            if self._dim is None:
                self._dim = bag.dim
            elif bag.dim != self._dim:
                raise TrainingError(
                    f"bag {item.slide_id!r} has D={bag.dim}, dataset established D={self._dim}"
                )
            self._bags[index] = bag
        return self._bags[index]


def _mean_val_loss(model: MilModel, store: BagStore, dataset: LabeledDataset, indices: list[int]) -> float:
    # plain cross-entropy: decay and instance terms would only blur the
    # early-stopping signal
    total = 0.0
    for i in indices:
        out = forward(model, store.bag(i))
        total += bag_cross_entropy(out, dataset.items[i].label)
    return total / len(indices)


def train_fold(
    dataset: LabeledDataset,
    plan: SplitPlan,
    round_idx: int,
    cfg: TrainConfig,
    store: BagStore | None = None,
) -> tuple[MilModel, list[EpochRecord]]:
    """Train one round, keeping the parameters with the best val loss.

    Seeds (model init and epoch shuffles) derive from cfg.seed + round_idx,
    so rounds are independent and the whole round is deterministic.
    """
    if round_idx < 0 or round_idx >= plan.k:
        raise TrainingError(f"round {round_idx} out of range for k={plan.k}")
    if plan.n != len(dataset):
        raise TrainingError(f"plan covers {plan.n} items, dataset has {len(dataset)}")
    store = store or BagStore(dataset)
    train_idx = plan.train_indices(round_idx)
    val_idx = plan.val_indices(round_idx)
    test_idx = plan.test_indices(round_idx)
    if not train_idx or not val_idx or not test_idx:
        raise TrainingError(f"round {round_idx}: empty train/val/test partition")

    round_seed = cfg.seed + round_idx
    model = init_model(store.dim, cfg.hidden_dim, cfg.attention_dim, seed=round_seed)
    state = AdamState.for_model(model, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    shuffle_rng = np.random.default_rng(round_seed)
    instance_weight = cfg.instance_weight if cfg.instance_loss else 0.0

    history: list[EpochRecord] = []
    best_val = np.inf
    best_epoch = 0
    best_params = model.clone()
    epochs_since_best = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_idx))
        epoch_loss = 0.0
        for j in order:
            i = train_idx[j]
            loss, grads = loss_and_backward(
                model,
                store.bag(i),
                dataset.items[i].label,
                weight_decay=cfg.weight_decay,
                instance_weight=instance_weight,
                instance_k=cfg.instance_k,
            )
            adam_step(model, grads, state)
            epoch_loss += loss
        val_loss = _mean_val_loss(model, store, dataset, val_idx)
        history.append(EpochRecord(train_loss=epoch_loss / len(train_idx), val_loss=val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = model.clone()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break
    best_params.validate()
    return best_params, history


def _round_metrics(scores: list[float], labels: list[int], threshold: float) -> metrics.MetricSet | None:
    if len(set(labels)) < 2:
        return None
    auc = metrics.auroc(scores, labels)
    cm = metrics.confusion(scores, labels, threshold)
    return metrics.classification_metrics(cm, auc, threshold)


def run_cross_validation(
    dataset: LabeledDataset,
    k: int,
    cfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
    plan: SplitPlan | None = None,
) -> CVReport:
    """Run all k rounds; optionally write round_<r>.milm checkpoints."""
    if plan is None:
        plan = build_split_plan(dataset.labels, k, cfg.seed)
    elif plan.k != k or plan.n != len(dataset):
        raise TrainingError(
            f"plan (k={plan.k}, n={plan.n}) does not match run (k={k}, n={len(dataset)})"
        )
    store = BagStore(dataset)
    rounds: list[RoundResult] = []
    pooled_scores: list[float | None] = [None] * len(dataset)
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    for r in range(k):
        model, history = train_fold(dataset, plan, r, cfg, store=store)
        if checkpoint_dir is not None:
            save_model(model, checkpoint_dir / f"round_{r}.milm")
        test_idx = plan.test_indices(r)
        scores = [float(forward(model, store.bag(i)).probs[1]) for i in test_idx]
        labels = [dataset.items[i].label for i in test_idx]
        for i, s in zip(test_idx, scores):
            pooled_scores[i] = s
        best_epoch = int(np.argmin([rec.val_loss for rec in history])) + 1
        rounds.append(
            RoundResult(
                round_idx=r,
                history=history,
                best_epoch=best_epoch,
                test_indices=list(test_idx),
                test_slide_ids=[dataset.items[i].slide_id for i in test_idx],
                test_scores=scores,
                test_labels=labels,
                metrics=_round_metrics(scores, labels, cfg.threshold),
            )
        )
    assert all(s is not None for s in pooled_scores), "some slide was never scored"
    pooled_labels = dataset.labels
    pooled_auc = metrics.auroc(pooled_scores, pooled_labels)
    pooled_cm = metrics.confusion(pooled_scores, pooled_labels, cfg.threshold)
    pooled = metrics.classification_metrics(pooled_cm, pooled_auc, cfg.threshold)
    return CVReport(
        k=k,
        seed=cfg.seed,
        config=asdict(cfg),
        task=dataset.task.name,
        rounds=rounds,
        pooled_scores=[float(s) for s in pooled_scores],
        pooled_labels=list(pooled_labels),
        pooled_metrics=pooled,
    )


def _metric_set_to_dict(ms: metrics.MetricSet | None) -> dict | None:
    if ms is None:
        return None
    return {
        "auroc": ms.auroc,
        "f1": ms.f1,
        "precision": ms.precision,
        "recall": ms.recall,
        "specificity": ms.specificity,
        "threshold": ms.threshold,
        "undefined": list(ms.undefined),
    }


def report_to_dict(report: CVReport) -> dict:
    return {
        "k": report.k,
        "seed": report.seed,
        "config": report.config,
        "task": report.task,
        "rounds": [
            {
                "round": r.round_idx,
                "history": [
                    {"train_loss": rec.train_loss, "val_loss": rec.val_loss} for rec in r.history
                ],
                "best_epoch": r.best_epoch,
                "test_indices": r.test_indices,
                "test_slide_ids": r.test_slide_ids,
                "test_scores": r.test_scores,
                "test_labels": r.test_labels,
                "metrics": _metric_set_to_dict(r.metrics),
            }
            for r in report.rounds
        ],
        "pooled_scores": report.pooled_scores,
        "pooled_labels": report.pooled_labels,
        "pooled_metrics": _metric_set_to_dict(report.pooled_metrics),
    }


def report_to_json(report: CVReport) -> str:
    return dumps_stable(report_to_dict(report))
