"""Stratified k-fold split plans with a fixed test/validation rotation.

Every slide lands in exactly one test fold and one validation fold across
the k rounds: round r tests on fold r, validates on fold (r+1) mod k and
trains on the remaining k-2 folds, i.e. a (k-2)/k : 1/k : 1/k ratio.

Fold assignment is stratified: class-1 indices are shuffled and dealt
round-robin into the folds, then class-0 indices continue the deal where
class 1 left off, so per-class and overall fold sizes each differ by at
most one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .jsonio import dumps_stable


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Round:
    test_fold: int
    val_fold: int
    train_folds: tuple[int, ...]


@dataclass(frozen=True)
class SplitPlan:
    k: int
    seed: int
    fold_of: tuple[int, ...]  # slide index -> fold id
    rounds: tuple[Round, ...]

    @property
    def n(self) -> int:
        return len(self.fold_of)

    def fold_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.fold_of) if f == fold]

    def test_indices(self, round_idx: int) -> list[int]:
        return self.fold_indices(self.rounds[round_idx].test_fold)

    def val_indices(self, round_idx: int) -> list[int]:
        return self.fold_indices(self.rounds[round_idx].val_fold)

    def train_indices(self, round_idx: int) -> list[int]:
        folds = set(self.rounds[round_idx].train_folds)
        return [i for i, f in enumerate(self.fold_of) if f in folds]


def build_split_plan(labels: list[int], k: int, seed: int) -> SplitPlan:
    """Deterministic stratified plan for the given binary labels.

    Warns (but proceeds) when a class has fewer than k members, in which
    case some folds necessarily miss that class.
    """
    labels = [int(y) for y in labels]
    if any(y not in (0, 1) for y in labels):
        raise SplitError("labels must be 0 or 1")
    n = len(labels)
    if k < 3:
        raise SplitError(f"k must be >= 3 so train/val/test are disjoint and non-empty, got {k}")
    if n < k:
        raise SplitError(f"need at least k={k} items, got {n}")
    pos = [i for i, y in enumerate(labels) if y == 1]
    neg = [i for i, y in enumerate(labels) if y == 0]
    smallest = min(len(pos), len(neg))
    if smallest < k:
        warnings.warn(
            f"minority class has {smallest} members for k={k} folds; "
            "stratification degrades (some folds miss that class)",
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    fold_of = [0] * n
    position = 0
    for group in (pos, neg):
        for idx in rng.permutation(len(group)):
            fold_of[group[idx]] = position % k
            position += 1
    rounds = []
    for r in range(k):
        val = (r + 1) % k
        train = tuple(f for f in range(k) if f not in (r, val))
        rounds.append(Round(test_fold=r, val_fold=val, train_folds=train))
    return SplitPlan(k=k, seed=int(seed), fold_of=tuple(fold_of), rounds=tuple(rounds))


def plan_to_dict(plan: SplitPlan) -> dict:
    return {
        "k": plan.k,
        "seed": plan.seed,
        "n": plan.n,
        "fold_of": list(plan.fold_of),
        "rounds": [
            {"test_fold": r.test_fold, "val_fold": r.val_fold, "train_folds": list(r.train_folds)}
            for r in plan.rounds
        ],
    }


def plan_to_json(plan: SplitPlan) -> str:
    return dumps_stable(plan_to_dict(plan))


def plan_from_dict(doc: dict) -> SplitPlan:
    """Rebuild a plan from its JSON form, re-checking the invariants."""
    try:
        k = int(doc["k"])
        seed = int(doc["seed"])
        fold_of = tuple(int(f) for f in doc["fold_of"])
        rounds = tuple(
            Round(test_fold=int(r["test_fold"]), val_fold=int(r["val_fold"]), train_folds=tuple(int(f) for f in r["train_folds"]))
            for r in doc["rounds"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SplitError(f"malformed split plan document: {exc}") from exc
    if k < 3 or len(rounds) != k:
        raise SplitError(f"plan must have k >= 3 rounds, got k={k} with {len(rounds)} rounds")
    if any(f < 0 or f >= k for f in fold_of):
        raise SplitError("fold_of contains fold ids outside [0, k)")
    for r_idx, rnd in enumerate(rounds):
        expected_val = (rnd.test_fold + 1) % k
        expected_train = tuple(f for f in range(k) if f not in (rnd.test_fold, expected_val))
        if rnd.test_fold != r_idx or rnd.val_fold != expected_val or rnd.train_folds != expected_train:
            raise SplitError(f"round {r_idx} violates the test/val rotation rule")
    return SplitPlan(k=k, seed=seed, fold_of=fold_of, rounds=rounds)
