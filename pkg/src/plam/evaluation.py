"""Out-of-sample evaluation: k-fold CV, MSE, AUC with the DeLong test, the
model confidence set, and potency/gauge of interaction selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import Dataset
from .errors import EmptyRelevant, LengthMismatch, PlamError, SingleClass
from .selection import fold_ids


@dataclass
class CvPredictions:
    folds: np.ndarray
    predictions: np.ndarray
    model: str
    seed: object
    k: int

    def to_rows(self):
        return [(i, int(f), float(p)) for i, (f, p) in enumerate(zip(self.folds, self.predictions))]


class FoldError(PlamError):
    def __init__(self, fold, exc):
        super().__init__(f"fold {fold}: {type(exc).__name__}: {exc}")
        self.fold = fold
        self.cause = exc


def kfold_cv(data: Dataset, fit, k: int = 10, seed=0, name: str = "model", folds=None) -> CvPredictions:
    """Out-of-fold predictions from ``fit(train) -> model`` with ``model.predict(test)``.

    All tuning happens inside ``fit``, so it only ever sees the training folds.
    """
    n = data.n
    if k < 2 or n < k:
        raise ValueError(f"need 2 <= k <= n (n={n}, k={k})")
    folds = fold_ids(n, k, seed) if folds is None else np.asarray(folds)
    pred = np.empty(n)
    for f in range(k):
        te = folds == f
        try:
            model = fit(data.subset(np.nonzero(~te)[0]))
            pred[te] = model.predict(data.subset(np.nonzero(te)[0]))
        except PlamError as exc:
            raise FoldError(f, exc) from exc
    return CvPredictions(folds, pred, name, seed, k)


def mse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.shape} vs {truth.shape}")
    d = pred - truth
    return float(d @ d / d.size)


def _labels(labels):
    y = np.asarray(labels, dtype=float)
    if not np.all(np.isin(y, [0.0, 1.0])):
        raise ValueError("labels must be 0/1")
    if y.min() == y.max():
        raise SingleClass("both classes are needed for an AUC")
    return y.astype(bool)


def auc(scores, labels) -> float:
    """Rank-based AUC (ties count one half) of scores clamped to [0, 1]."""
    s = np.clip(np.asarray(scores, dtype=float), 0.0, 1.0)
    y = _labels(labels)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.shape} vs {y.shape}")
    r = stats.rankdata(s)
    n1 = int(y.sum())
    n0 = y.size - n1
    return float((r[y].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def _placements(s, y):
    """DeLong structural components V10 (per positive) and V01 (per negative)."""
    pos, neg = s[y], s[~y]
    # V10_i = P(neg < pos_i) + 0.5 P(neg == pos_i)
    neg_sorted = np.sort(neg)
    lt = np.searchsorted(neg_sorted, pos, side="left")
    le = np.searchsorted(neg_sorted, pos, side="right")
    v10 = (lt + 0.5 * (le - lt)) / neg.size
    pos_sorted = np.sort(pos)
    gt_lo = np.searchsorted(pos_sorted, neg, side="right")
    gt_eq = np.searchsorted(pos_sorted, neg, side="left")
    v01 = (pos.size - gt_lo + 0.5 * (gt_lo - gt_eq)) / pos.size
    return v10, v01


@dataclass
class AucTestResult:
    auc1: float
    auc2: float
    z: float
    p_value: float
    covariance: np.ndarray

    def as_dict(self):
        return {"auc1": self.auc1, "auc2": self.auc2, "z": self.z, "p_value": self.p_value,
                "covariance": self.covariance.tolist()}


def auc_test(scores1, scores2, labels) -> AucTestResult:
    """DeLong test of equal AUCs for two score vectors on the same sample."""
    y = _labels(labels)
    s1 = np.clip(np.asarray(scores1, dtype=float), 0.0, 1.0)
    s2 = np.clip(np.asarray(scores2, dtype=float), 0.0, 1.0)
    if s1.shape != y.shape or s2.shape != y.shape:
        raise LengthMismatch("scores and labels differ in length")
    a1, a2 = auc(s1, y), auc(s2, y)
    p10, p01 = _placements(s1, y)
    q10, q01 = _placements(s2, y)
    S10 = np.cov(np.vstack([p10, q10]))
    S01 = np.cov(np.vstack([p01, q01]))
    cov = S10 / p10.size + S01 / p01.size
    var = cov[0, 0] + cov[1, 1] - 2.0 * cov[0, 1]
    diff = a1 - a2
    if var <= 1e-15 or not np.isfinite(var):
        return AucTestResult(a1, a2, 0.0, 1.0, cov)
    z = diff / math.sqrt(var)
    return AucTestResult(a1, a2, float(z), float(2.0 * stats.norm.sf(abs(z))), cov)


@dataclass
class McsResult:
    models: list
    surviving: list
    elimination_order: list
    p_values: dict
    B: int
    block: int = 1
    alpha: float = 0.1

    def as_dict(self):
        return {"models": self.models, "surviving": self.surviving,
                "elimination_order": self.elimination_order, "p_values": self.p_values,
                "B": self.B, "block": self.block, "alpha": self.alpha}


def mcs(losses, alpha: float = 0.10, B: int = 10_000, seed=0, names=None, block: int = 1) -> McsResult:
    """Model confidence set with the range statistic and an iid row bootstrap.

    At every step the test statistic is ``max_{i,j} |t_ij|`` over the
    surviving models, with ``t_ij = dbar_ij / se(dbar_ij)``; the model with
    the largest ``max_j t_ij`` is eliminated.  A model's MCS p-value is the
    largest test p-value at or before its elimination; the last survivor
    gets 1.
    """
    L = np.asarray(losses, dtype=float)
    n, m = L.shape
    if m < 2:
        raise ValueError("need at least two models")
    names = list(names) if names is not None else [f"m{j}" for j in range(m)]
    if block != 1:
        raise ValueError("only the iid bootstrap (block = 1) is implemented")
    rng = np.random.default_rng(seed)
    # bootstrap means of every model's loss; one index draw shared by all models
    boot = np.empty((B, m))
    chunk = max(1, 2_000_000 // max(n, 1))
    for s in range(0, B, chunk):
        e = min(B, s + chunk)
        idx = rng.integers(0, n, size=(e - s, n))
        boot[s:e] = L[idx].mean(axis=1)
    lbar = L.mean(axis=0)
    alive = list(range(m))
    order, pvals = [], {}
    running = 0.0
    while len(alive) > 1:
        a = np.array(alive)
        d = lbar[a][:, None] - lbar[a][None, :]
        bd = boot[:, a][:, :, None] - boot[:, a][:, None, :]
        var = ((bd - d[None]) ** 2).mean(axis=0)
        se = np.sqrt(var)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(se > 0, d / se, 0.0)
            tb = np.where(se[None] > 0, (bd - d[None]) / se[None], 0.0)
        T = np.abs(t).max()
        Tb = np.abs(tb).reshape(B, -1).max(axis=1)
        p = float((Tb >= T).mean()) if T > 0 else 1.0
        running = max(running, p)
        worst = alive[int(np.argmax(t.max(axis=1)))]
        order.append(names[worst])
        pvals[names[worst]] = running
        alive.remove(worst)
    pvals[names[alive[0]]] = 1.0
    surviving = [nm for nm in names if pvals[nm] >= alpha]
    return McsResult(names, surviving, order, pvals, B, block, alpha)


def _pairs(selected):
    return {tuple(sorted(s.split(":"))) if isinstance(s, str) else tuple(s) for s in selected}


def potency(selected, relevant) -> float:
    rel = _pairs(relevant)
    if not rel:
        raise EmptyRelevant("potency needs at least one relevant pair")
    return len(_pairs(selected) & rel) / len(rel)


def gauge(selected, relevant, S: int) -> float:
    rel = _pairs(relevant)
    irrelevant = S - len(rel)
    if irrelevant <= 0:
        return 0.0
    return len(_pairs(selected) - rel) / irrelevant
