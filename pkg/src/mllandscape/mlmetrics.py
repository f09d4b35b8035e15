"""Quality metrics for solutions of classification landscapes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.cluster.hierarchy import leaves_list, linkage
from scipy.spatial.distance import squareform

from .models.neuralnet import ClassificationDataset, NeuralNetSpec, predict_proba
from .models.triatomic import extract_inputs


@dataclass(frozen=True)
class MissVector:
    misses: np.ndarray   # bool, one entry per test item

    @property
    def f(self) -> float:
        return float(np.mean(self.misses))

    def __len__(self):
        return self.misses.size


def predict_classes(spec: NeuralNetSpec, W, inputs) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(predict_proba(spec, W, inputs), axis=1)


def miss_vector(spec: NeuralNetSpec, W, testset: ClassificationDataset) -> MissVector:
    return MissVector(predict_classes(spec, W, testset.inputs) != testset.labels)


def misclassification_distance(a: MissVector, b: MissVector) -> float:
    if len(a) != len(b):
        raise ValueError(f"miss vectors differ in length ({len(a)} vs {len(b)})")
    return float(np.mean(a.misses ^ b.misses))


@dataclass
class DistanceMatrices:
    ell: np.ndarray            # misclassification distances
    param: np.ndarray          # Euclidean parameter distances
    f: np.ndarray              # misclassified fraction per minimum
    order: np.ndarray          # single-linkage leaf order on ell
    joint_counts: np.ndarray   # (bins, bins) histogram over pairs, rows = param distance
    param_edges: np.ndarray
    ell_edges: np.ndarray


def distance_matrix(weights: Iterable, spec: NeuralNetSpec, testset: ClassificationDataset,
                    bins: int = 50) -> DistanceMatrices:
    Ws = [np.asarray(w, dtype=float) for w in weights]
    if len(Ws) < 2:
        raise ValueError("need at least two minima")
    M = np.array([miss_vector(spec, W, testset).misses for W in Ws], dtype=float)
    n_test = M.shape[1]
    # Hamming distance via inner products of the 0/1 vectors
    common = M @ M.T
    counts = M.sum(axis=1)
    ell = (counts[:, None] + counts[None, :] - 2.0 * common) / n_test
    np.fill_diagonal(ell, 0.0)
    P = np.array(Ws)
    sq = np.sum(P * P, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * P @ P.T, 0.0)
    param = np.sqrt(d2)
    np.fill_diagonal(param, 0.0)
    order = leaves_list(linkage(squareform(ell, checks=False), method="single"))
    iu = np.triu_indices(len(Ws), 1)
    H, pe, le = np.histogram2d(param[iu], ell[iu], bins=bins)
    return DistanceMatrices(ell, param, counts / n_test, order, H, pe, le)


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_from_scores(scores, positive) -> RocCurve:
    """ROC sweep with an item predicted positive when its score is >= P.

    P runs over the distinct scores from the largest down, preceded by a
    threshold above every score, so the curve starts at (0, 0) and ends at
    (1, 1).  Tied positive/negative scores give a diagonal segment.
    """
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos, n_neg = int(positive.sum()), int((~positive).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative item")
    thr = np.unique(scores)[::-1]
    # counts of items with score >= each threshold
    idx = np.searchsorted(np.sort(scores[positive]), thr, side="left")
    tp = n_pos - idx
    idx = np.searchsorted(np.sort(scores[~positive]), thr, side="left")
    fp = n_neg - idx
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, np.concatenate([[np.inf], thr]), auc)


def auc_pair_count(scores, positive) -> float:
    """Fraction of (positive, negative) pairs ranked correctly, ties as 1/2."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    sp, sn = scores[positive], scores[~positive]
    if sp.size == 0 or sn.size == 0:
        raise ValueError("need at least one positive and one negative item")
    diff = sp[:, None] - sn[None, :]
    return float((np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size)


def roc_auc(spec: NeuralNetSpec, W, testset: ClassificationDataset, positive_class: int = 0) -> RocCurve:
    p = predict_proba(spec, W, testset.inputs)[:, positive_class]
    return roc_from_scores(p, testset.labels == positive_class)


def auc_vs_steps(minima: dict, spec: NeuralNetSpec, test_runs, s_values, lambda_set,
                 reference_lambda=None, positive_class: int = 0) -> list[dict]:
    """Test-set AUC against the number of steps from convergence.

    ``minima`` maps (lambda, s) to a landscape database of weight vectors
    trained on inputs taken ``s`` steps from convergence.  For each s the
    table holds the AUC of the reference-lambda global minimum and the best
    AUC of any stored minimum (any lambda, any training s) on the same test
    inputs.
    """
    lambda_set = list(lambda_set)
    ref = lambda_set[0] if reference_lambda is None else reference_lambda
    pool = [m.coords for db in minima.values() for m in db.minima_by_energy()]
    rows = []
    for s in s_values:
        test = extract_inputs(test_runs, "r2_at_s", s)
        g = minima[(ref, s)].global_minimum()
        auc_g = roc_auc(spec, g.coords, test, positive_class).auc
        auc_max = max(roc_auc(spec, W, test, positive_class).auc for W in pool)
        rows.append({"s": int(s), "auc_global_min": auc_g, "auc_max": auc_max,
                     "n_minima": len(pool)})
    return rows
