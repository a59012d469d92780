"""Class-imbalance correction for the labeled training rows.

Artifact pulses are the minority class (~18% of the data), so the labeled
training set is rebalanced before propagation or classifier fitting:

* rus      -- randomly delete majority rows;
* ros      -- randomly duplicate minority rows;
* smote    -- synthesize minority rows by interpolating toward one of the
              k nearest minority neighbors;
* adasyn   -- like smote, but each minority row generates a share of the
              synthetic budget proportional to the majority density among
              its k nearest neighbors in the full set;
* ros_rus  -- oversample the minority to the geometric midpoint count,
              then undersample the majority down to the target.

All methods are deterministic for a fixed seed, keep the surviving
original rows (in input order) ahead of any synthesized/duplicated rows,
and name new rows ``syn:<n>``. Resampling is for training data only; test
rows and the unlabeled pool must never pass through here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .preprocess import PulseMatrix

METHODS = ("none", "rus", "ros", "smote", "adasyn", "ros_rus")


@dataclass(frozen=True)
class ResampleSpec:
    method: str = "none"
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not 0 < self.target_ratio <= 1:
            raise ValueError("target_ratio must lie in (0, 1]")


def resample(features: PulseMatrix, labels, spec: ResampleSpec) -> tuple[PulseMatrix, np.ndarray]:
    """Rebalance a fully labeled (0/1) matrix according to spec.

    Returns a new matrix/label pair with minority:majority close to
    spec.target_ratio (within one majority row).
    """
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (features.n_pulses,):
        raise ValueError("labels must align with the feature rows")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("resampling requires labels in {0, 1}")
    counts = {0: int((y == 0).sum()), 1: int((y == 1).sum())}
    if counts[0] == 0 or counts[1] == 0:
        raise ValueError("both classes must be present")

    if spec.method == "none":
        return PulseMatrix(list(features.pulse_ids), features.features.copy()), y.copy()

    # tie goes to class 1: artifacts are the semantic minority
    minority = 1 if counts[1] <= counts[0] else 0
    majority = 1 - minority
    rng = np.random.default_rng(spec.seed)

    if spec.method == "rus":
        keep_idx = _undersample(y, majority, counts[minority], spec.target_ratio, rng)
        return _subset(features, keep_idx), y[keep_idx]

    if spec.method == "ros":
        new_rows, new_labels = _oversample_duplicate(
            features.features, y, minority, _needed(counts, minority, majority, spec.target_ratio), rng
        )
        return _append(features, y, new_rows, new_labels)

    if spec.method == "smote":
        need = _needed(counts, minority, majority, spec.target_ratio)
        new_rows = _smote_rows(features.features, y, minority, need, spec.k_neighbors, rng)
        return _append(features, y, new_rows, np.full(len(new_rows), minority, dtype=np.int64))

    if spec.method == "adasyn":
        need = _needed(counts, minority, majority, spec.target_ratio)
        new_rows = _adasyn_rows(features.features, y, minority, need, spec.k_neighbors, rng)
        return _append(features, y, new_rows, np.full(len(new_rows), minority, dtype=np.int64))

    # ros_rus: minority up to round(sqrt(n_min * n_maj)), then majority down
    midpoint = int(round(np.sqrt(counts[minority] * counts[majority])))
    need = max(0, midpoint - counts[minority])
    new_rows, new_labels = _oversample_duplicate(features.features, y, minority, need, rng)
    grown, grown_labels = _append(features, y, new_rows, new_labels)
    keep_idx = _undersample(grown_labels, majority, counts[minority] + need, spec.target_ratio, rng)
    return _subset(grown, keep_idx), grown_labels[keep_idx]


def _needed(counts, minority, majority, target_ratio) -> int:
    return max(0, int(round(target_ratio * counts[majority])) - counts[minority])


def _undersample(y, majority, n_minority, target_ratio, rng) -> np.ndarray:
    """Indices to keep: every minority row plus a random majority subset, input order."""
    majority_idx = np.flatnonzero(y == majority)
    keep_majority = min(majority_idx.size, int(round(n_minority / target_ratio)))
    chosen = rng.choice(majority_idx.size, size=keep_majority, replace=False)
    dropped = np.zeros(y.size, dtype=bool)
    dropped[majority_idx] = True
    dropped[majority_idx[np.sort(chosen)]] = False
    return np.flatnonzero(~dropped)


def _oversample_duplicate(feats, y, minority, need, rng):
    minority_idx = np.flatnonzero(y == minority)
    picks = rng.integers(0, minority_idx.size, size=need)
    rows = feats[minority_idx[picks]].copy()
    return rows, np.full(need, minority, dtype=np.int64)


def _minority_neighbors(minority_feats, k) -> np.ndarray:
    if minority_feats.shape[0] <= k:
        raise ValueError(
            f"minority count {minority_feats.shape[0]} must exceed k_neighbors={k} for interpolation"
        )
    return _kernels.topk_neighbors(minority_feats, minority_feats, k, exclude_self=True)


def _interpolate(minority_feats, neighbors, base_picks, nn_picks, lambdas) -> np.ndarray:
    base = minority_feats[base_picks]
    partner = minority_feats[neighbors[base_picks, nn_picks]]
    return base + lambdas[:, None] * (partner - base)


def _smote_rows(feats, y, minority, need, k, rng) -> np.ndarray:
    minority_feats = feats[y == minority]
    neighbors = _minority_neighbors(minority_feats, k)
    base_picks = rng.integers(0, minority_feats.shape[0], size=need)
    nn_picks = rng.integers(0, k, size=need)
    lambdas = rng.uniform(0.0, 1.0, size=need)
    return _interpolate(minority_feats, neighbors, base_picks, nn_picks, lambdas)


def _adasyn_rows(feats, y, minority, need, k, rng) -> np.ndarray:
    minority_idx = np.flatnonzero(y == minority)
    minority_feats = feats[minority_idx]
    if minority_feats.shape[0] <= k:
        raise ValueError(
            f"minority count {minority_feats.shape[0]} must exceed k_neighbors={k} for interpolation"
        )
    if need == 0:
        return np.empty((0, feats.shape[1]), dtype=np.float64)

    # majority density r_i over the k nearest neighbors in the full set
    full_nn = _kernels.topk_neighbors(minority_feats, feats, k + 1, exclude_self=False)
    r = np.empty(minority_feats.shape[0], dtype=np.float64)
    for row, nn_row in enumerate(full_nn):
        others = [j for j in nn_row if j != minority_idx[row]][:k]
        r[row] = np.mean(y[others] != minority)
    if r.sum() == 0.0:
        return _smote_rows(feats, y, minority, need, k, rng)

    counts = _largest_remainder(r / r.sum(), need)
    neighbors = _minority_neighbors(minority_feats, k)
    chunks = []
    for row, g in enumerate(counts):
        if g == 0:
            continue
        nn_picks = rng.integers(0, k, size=g)
        lambdas = rng.uniform(0.0, 1.0, size=g)
        base = np.repeat(minority_feats[row : row + 1], g, axis=0)
        partner = minority_feats[neighbors[row][nn_picks]]
        chunks.append(base + lambdas[:, None] * (partner - base))
    return np.vstack(chunks)


def _largest_remainder(weights, total) -> np.ndarray:
    """Integer apportionment of `total` proportional to `weights` (sums exactly)."""
    quotas = weights * total
    counts = np.floor(quotas).astype(np.int64)
    shortfall = total - int(counts.sum())
    if shortfall > 0:
        remainders = quotas - counts
        # ties toward the lower index: stable sort on descending remainder
        order = np.argsort(-remainders, kind="stable")
        counts[order[:shortfall]] += 1
    return counts


def _subset(matrix: PulseMatrix, keep_idx) -> PulseMatrix:
    ids = [matrix.pulse_ids[i] for i in keep_idx]
    return PulseMatrix(ids, matrix.features[keep_idx].copy())


def _append(matrix: PulseMatrix, y, new_rows, new_labels) -> tuple[PulseMatrix, np.ndarray]:
    syn_ids = [f"syn:{n}" for n in range(len(new_rows))]
    merged = PulseMatrix(
        list(matrix.pulse_ids) + syn_ids,
        np.vstack([matrix.features, new_rows]) if len(new_rows) else matrix.features.copy(),
    )
    return merged, np.concatenate([y, new_labels])
