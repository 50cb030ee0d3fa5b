"""Comparator models: augmented OLS, CART, random forest, gradient boosting, PLTR."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numba
import numpy as np
from scipy import linalg

from .data import Dataset, is_constant
from .errors import DegenerateSplit, RankDeficient

INF_DEPTH = 1 << 30


# ------------------------------------------------------------ linear models

@dataclass
class AugmentedDesign:
    source: list
    names: list
    n_powers: int
    with_interactions: bool

    def matrix(self, data: Dataset) -> np.ndarray:
        return data.term_matrix(self.names)


def augment(data: Dataset, powers: int = 3, with_interactions: bool = True) -> AugmentedDesign:
    """Levels of every non-constant feature, powers 2..``powers`` of continuous ones,
    then all pairwise products."""
    if not 1 <= powers <= 3:
        raise ValueError("powers must be 1, 2 or 3")
    feats = [c for c in data.columns if not is_constant(data, c)]
    cont = [c for c in feats if data.kinds[c] == "continuous"]
    names = list(feats)
    for h in range(2, powers + 1):
        names.extend(f"{c}^{h}" for c in cont)
    if with_interactions:
        names.extend(f"{a}:{b}" for a, b in combinations(feats, 2))
    return AugmentedDesign(feats, names, powers, with_interactions)


@dataclass
class LinearModel:
    intercept: float
    coefficients: dict
    pinned: list = field(default_factory=list)
    family: str = "gaussian"

    @property
    def linear_terms(self) -> dict:
        return self.coefficients

    def predict(self, data: Dataset) -> np.ndarray:
        out = np.full(data.n, self.intercept)
        for name, b in self.coefficients.items():
            if b != 0.0:
                out = out + b * data.term(name)
        return out


def ols_coefficients(X, y):
    """Least squares through a column-pivoted QR; rank-deficient columns get 0.

    Returns ``(intercept, coefficients, pinned column indices)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    A = np.column_stack([np.ones(n), X])
    scale = np.linalg.norm(A, axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Q, R, piv = linalg.qr(A / scale, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = d[0] * max(n, p + 1) * np.finfo(float).eps if d.size else 0.0
    r = int((d > tol).sum())
    coef = np.zeros(p + 1)
    sol = linalg.solve_triangular(R[:r, :r], Q[:, :r].T @ y)
    coef[piv[:r]] = sol
    coef = coef / scale
    pinned = sorted(int(j) - 1 for j in piv[r:])
    return float(coef[0]), coef[1:], pinned


def fit_ols(data: Dataset, names=None, family: str = "gaussian") -> LinearModel:
    """OLS of the target on the listed terms (default: all features)."""
    names = list(data.columns if names is None else names)
    X = data.term_matrix(names)
    icpt, coef, pinned = ols_coefficients(X, data.y)
    if pinned:
        warnings.warn(f"rank-deficient design, coefficients pinned to zero: "
                      f"{[names[j] for j in pinned if j >= 0]}", RankDeficient)
    return LinearModel(icpt, dict(zip(names, coef.tolist())), [names[j] for j in pinned if j >= 0], family)


# ------------------------------------------------------------------- trees

@numba.njit(cache=True)
def _build_tree(X, y, max_depth, min_leaf, mtry, seed):
    n, p = X.shape
    if seed >= 0:
        np.random.seed(seed)
    cap = 2 * n + 1
    feat = np.full(cap, -1, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    gain = np.zeros(cap)
    rows = np.arange(n)
    buf = np.empty(n, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_d = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0], st_lo[0], st_hi[0], st_d[0] = 0, 0, n, 0
    top = 1
    n_nodes = 1
    xs = np.empty(n)
    ys = np.empty(n)
    while top > 0:
        top -= 1
        node, lo, hi, d = st_node[top], st_lo[top], st_hi[top], st_d[top]
        m = hi - lo
        tot = 0.0
        for i in range(lo, hi):
            tot += y[rows[i]]
        mean = tot / m
        value[node] = mean
        count[node] = m
        if d >= max_depth or m < 2 * min_leaf:
            continue
        sse = 0.0
        for i in range(lo, hi):
            r = y[rows[i]] - mean
            sse += r * r
        if sse <= 1e-14 * max(1.0, abs(tot)):
            continue
        if mtry < p:
            cand = np.sort(np.random.permutation(p)[:mtry])
        else:
            cand = np.arange(p)
        best_g = 0.0
        best_f = -1
        best_t = 0.0
        base = tot * tot / m
        for f in cand:
            for i in range(m):
                xs[i] = X[rows[lo + i], f]
            order = np.argsort(xs[:m], kind="mergesort")
            for i in range(m):
                ys[i] = y[rows[lo + order[i]]]
            xsorted = xs[:m][order]
            sl = 0.0
            for i in range(m - 1):
                sl += ys[i]
                nl = i + 1
                nr = m - nl
                if nl < min_leaf:
                    continue
                if nr < min_leaf:
                    break
                if xsorted[i] == xsorted[i + 1]:
                    continue
                sr = tot - sl
                g = sl * sl / nl + sr * sr / nr - base
                if g > best_g * (1.0 + 1e-12) and g > 1e-12 * sse:
                    best_g = g
                    best_f = f
                    best_t = 0.5 * (xsorted[i] + xsorted[i + 1])
        if best_f < 0:
            continue
        # partition rows[lo:hi] stably around the threshold
        nl = 0
        for i in range(lo, hi):
            if X[rows[i], best_f] <= best_t:
                buf[nl] = rows[i]
                nl += 1
        k = nl
        for i in range(lo, hi):
            if X[rows[i], best_f] > best_t:
                buf[k] = rows[i]
                k += 1
        for i in range(m):
            rows[lo + i] = buf[i]
        feat[node] = best_f
        thr[node] = best_t
        gain[node] = best_g
        l_id, r_id = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = l_id, r_id
        # push right first so the left subtree is numbered first
        st_node[top], st_lo[top], st_hi[top], st_d[top] = r_id, lo + nl, hi, d + 1
        top += 1
        st_node[top], st_lo[top], st_hi[top], st_d[top] = l_id, lo, lo + nl, d + 1
        top += 1
    return (feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes], gain[:n_nodes])


@numba.njit(cache=True)
def _apply_tree(X, feat, thr, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@dataclass(eq=False)
class TreeModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    gain: np.ndarray
    columns: list
    task: str = "regression"
    max_depth: int = INF_DEPTH
    min_leaf: int = 1

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def depth(self) -> int:
        depth = np.zeros(self.feature.size, dtype=int)
        for i in range(self.feature.size):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def leaf_index(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return _apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict_matrix(self, X) -> np.ndarray:
        return self.value[self.leaf_index(X)]

    def predict(self, data: Dataset) -> np.ndarray:
        return self.predict_matrix(_features(data, self.columns))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "n_samples", "gain")}

    @classmethod
    def from_dict(cls, d, columns, task="regression"):
        ints = ("feature", "left", "right", "n_samples")
        kw = {k: np.asarray(d[k], dtype=np.int64 if k in ints else float)
              for k in ("feature", "threshold", "left", "right", "value", "n_samples", "gain")}
        return cls(columns=list(columns), task=task, **kw)


def _features(data: Dataset, columns) -> np.ndarray:
    return np.ascontiguousarray(data.X[:, [data.index(c) for c in columns]])


def _grow(X, y, columns, task, max_depth, min_leaf, mtry=None, seed=-1) -> TreeModel:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    p = X.shape[1]
    mtry = p if mtry is None else int(mtry)
    depth = INF_DEPTH if max_depth is None else int(max_depth)
    arrs = _build_tree(X, y, depth, int(min_leaf), mtry, int(seed))
    return TreeModel(*arrs, columns=list(columns), task=task, max_depth=depth, min_leaf=int(min_leaf))


def fit_tree(data: Dataset, task: str = "regression", max_depth=None, min_leaf: int = 1,
             columns=None) -> TreeModel:
    """CART by exhaustive threshold scan; SSE for regression, Gini for a 0/1 class.

    For a binary target the Gini decrease of a split equals twice its SSE
    decrease, so both tasks share one split search; leaves hold the mean,
    which for classification is the share of class 1.
    """
    if task not in ("regression", "classification"):
        raise ValueError("task must be regression or classification")
    columns = list(data.columns if columns is None else columns)
    if data.n < 2 * min_leaf:
        raise ValueError("need n >= 2 * min_leaf")
    if task == "classification":
        _check_binary(data.y)
    return _grow(_features(data, columns), data.y, columns, task, max_depth, min_leaf)


def _check_binary(y):
    vals = np.unique(y)
    if not np.all(np.isin(vals, [0.0, 1.0])):
        raise ValueError("classification needs a 0/1 target")


@dataclass(eq=False)
class EnsembleModel:
    kind: str                  # forest | boosting
    trees: list
    weights: np.ndarray
    columns: list
    task: str = "regression"
    init: float = 0.0          # boosting base score (log-odds for logistic loss)
    loss: str = "squared"
    params: dict = field(default_factory=dict)
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)

    @property
    def B(self) -> int:
        return len(self.trees)

    def raw_score(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        out = np.full(X.shape[0], self.init)
        for w, t in zip(self.weights, self.trees):
            out += w * t.predict_matrix(X)
        return out

    def predict_matrix(self, X) -> np.ndarray:
        s = self.raw_score(X)
        if self.kind == "boosting" and self.loss == "logistic":
            return 1.0 / (1.0 + np.exp(-s))
        return s

    def predict(self, data: Dataset) -> np.ndarray:
        return self.predict_matrix(_features(data, self.columns))


def fit_random_forest(data: Dataset, B: int = 500, mtry=None, min_leaf: int = 5, seed=0,
                      task: str = "regression", bootstrap: bool = True, max_depth=None) -> EnsembleModel:
    """Bagged CART with ``mtry`` candidate features per split."""
    columns = list(data.columns)
    X = _features(data, columns)
    y = data.y
    n, p = X.shape
    if task == "classification":
        _check_binary(y)
    if mtry is None:
        mtry = math.ceil(p / 3) if task == "regression" else math.ceil(math.sqrt(p))
    ss = np.random.SeedSequence([int(seed), 0xF0]).generate_state(B, dtype=np.uint32)
    trees = []
    for b in range(B):
        rng = np.random.default_rng([int(seed), b])
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        trees.append(_grow(X[idx], y[idx], columns, task, max_depth, min_leaf, mtry, int(ss[b] % (2**31 - 1))))
    params = {"B": B, "mtry": int(mtry), "min_leaf": min_leaf, "seed": seed, "bootstrap": bootstrap}
    return EnsembleModel("forest", trees, np.full(B, 1.0 / B), columns, task, 0.0, "squared", params)


def _loss(y, score, loss):
    if loss == "squared":
        r = y - score
        return float(r @ r / y.size)
    # negative mean log-likelihood for logistic loss
    return float(np.mean(np.logaddexp(0.0, score) - y * score))


def _boost(X, y, B, lr, max_depth, min_leaf, loss, columns, task, Xv=None, yv=None):
    if loss == "squared":
        init = float(y.mean())
    else:
        pbar = min(max(y.mean(), 1e-6), 1 - 1e-6)
        init = float(math.log(pbar / (1 - pbar)))
    score = np.full(y.size, init)
    vscore = None if Xv is None else np.full(yv.size, init)
    trees, tr_loss, va_loss = [], [], []
    for _ in range(B):
        grad = y - score if loss == "squared" else y - 1.0 / (1.0 + np.exp(-score))
        t = _grow(X, grad, columns, task, max_depth, min_leaf)
        trees.append(t)
        score += lr * t.predict_matrix(X)
        tr_loss.append(_loss(y, score, loss))
        if vscore is not None:
            vscore += lr * t.predict_matrix(Xv)
            va_loss.append(_loss(yv, vscore, loss))
    return init, trees, tr_loss, va_loss


def fit_gradient_boosting(data: Dataset, B: int = 500, learning_rate: float = 0.1, max_depth: int = 3,
                          loss: str = "squared", seed=0, min_leaf: int = 1,
                          validation_fraction: float = 0.2) -> EnsembleModel:
    """Stagewise trees on negative gradients with constant shrinkage.

    With ``validation_fraction > 0`` a seeded hold-out slice picks the number
    of stages; the model is then refit on all rows with that many stages.
    """
    if loss not in ("squared", "logistic"):
        raise ValueError("loss must be squared or logistic")
    columns = list(data.columns)
    X = _features(data, columns)
    y = np.asarray(data.y, dtype=float)
    task = "regression" if loss == "squared" else "classification"
    if loss == "logistic":
        _check_binary(y)
    n_stages = B
    va_loss = []
    if validation_fraction > 0:
        rng = np.random.default_rng([int(seed), 0xB0])
        perm = rng.permutation(y.size)
        nv = max(1, int(round(validation_fraction * y.size)))
        va, tr = perm[:nv], perm[nv:]
        _, _, _, va_loss = _boost(X[tr], y[tr], B, learning_rate, max_depth, min_leaf, loss,
                                  columns, task, X[va], y[va])
        n_stages = int(np.argmin(va_loss)) + 1
    init, trees, tr_loss, _ = _boost(X, y, n_stages, learning_rate, max_depth, min_leaf, loss, columns, task)
    params = {"B": B, "stages": n_stages, "learning_rate": learning_rate, "max_depth": max_depth,
              "min_leaf": min_leaf, "seed": seed, "validation_fraction": validation_fraction}
    return EnsembleModel("boosting", trees, np.full(len(trees), learning_rate), columns, task,
                         init, loss, params, tr_loss, va_loss)


def variable_importance(model) -> list:
    """Total split gain per variable, normalized to one, in descending order."""
    trees = model.trees if isinstance(model, EnsembleModel) else [model]
    cols = trees[0].columns if trees else []
    tot = np.zeros(len(cols))
    for t in trees:
        inner = t.feature >= 0
        np.add.at(tot, t.feature[inner], t.gain[inner])
    s = tot.sum()
    share = tot / s if s > 0 else tot
    order = sorted(range(len(cols)), key=lambda j: (-share[j], j))
    return [(cols[j], float(share[j])) for j in order]


# -------------------------------------------------------------------- PLTR

@dataclass(eq=False)
class LeafRule:
    """Conjunction of threshold conditions ``(column, threshold, is_left)``."""
    conditions: list

    @property
    def name(self) -> str:
        return "&".join(f"{c}{'<=' if l else '>'}{t:.6g}" for c, t, l in self.conditions)

    def indicator(self, data: Dataset) -> np.ndarray:
        out = np.ones(data.n, dtype=bool)
        for c, t, l in self.conditions:
            x = data.column(c)
            out &= (x <= t) if l else (x > t)
        return out.astype(float)


@dataclass(eq=False)
class PltrModel:
    columns: list
    univariate: list           # LeafRule per variable
    bivariate: list            # LeafRule per pair
    coefficients: np.ndarray   # on the (X, V1, V2) design, original scale
    intercept: float
    selection: dict = field(default_factory=dict)

    @property
    def rules(self) -> list:
        return self.univariate + self.bivariate

    def design(self, data: Dataset) -> np.ndarray:
        blocks = [data.X[:, [data.index(c) for c in self.columns]]]
        blocks += [r.indicator(data)[:, None] for r in self.rules]
        return np.column_stack(blocks)

    def predict(self, data: Dataset) -> np.ndarray:
        eta = self.intercept + self.design(data) @ self.coefficients
        return 1.0 / (1.0 + np.exp(-eta))


def _one_split(x_cols, data, min_leaf):
    t = _grow(_features(data, x_cols), data.y, x_cols, "classification", 1, min_leaf)
    return t if t.feature[0] >= 0 else None


def _pair_leaf(data, a, b, min_leaf, deep_leaf):
    """Two-split tree on (a, b): root split, then a split of its left child
    (or of the right child when the left one cannot be split)."""
    cols = [a, b]
    X = _features(data, cols)
    root = _grow(X, data.y, cols, "classification", 1, min_leaf)
    if root.feature[0] < 0:
        return None
    f0, t0 = cols[root.feature[0]], float(root.threshold[0])
    go_left = X[:, root.feature[0]] <= t0
    for side in (True, False):
        rows = go_left if side else ~go_left
        if rows.sum() < 2 * min_leaf:
            continue
        sub = _grow(X[rows], data.y[rows], cols, "classification", 1, min_leaf)
        if sub.feature[0] < 0:
            continue
        f1, t1 = cols[sub.feature[0]], float(sub.threshold[0])
        return LeafRule([(f0, t0, side), (f1, t1, deep_leaf == "left")])
    return None


def fit_pltr(data: Dataset, seed=0, min_leaf=None, deep_leaf: str = "left", k: int = 10,
             n_cs: int = 30) -> PltrModel:
    """Penalized logistic tree regression.

    Step one extracts a first-leaf indicator from a one-split tree per
    variable and one deep-leaf indicator from a two-split tree per pair.
    Step two fits an adaptive-lasso logistic regression on the levels and
    the indicators, with ridge-logistic initial weights (nu = 1) and the
    lasso penalty at the CV-loss minimum.
    """
    from sklearn.linear_model import LogisticRegressionCV
    from sklearn.model_selection import StratifiedKFold

    if data.y is None:
        raise ValueError("dataset has no target")
    _check_binary(data.y)
    if deep_leaf not in ("left", "right"):
        raise ValueError("deep_leaf must be left or right")
    cols = [c for c in data.columns if not is_constant(data, c)]
    if len(cols) < 2:
        raise ValueError("PLTR needs at least two non-constant variables")
    min_leaf = max(1, data.n // 100) if min_leaf is None else int(min_leaf)
    uni, bi = [], []
    for c in cols:
        t = _one_split([c], data, min_leaf)
        if t is None:
            warnings.warn(f"PLTR: no split for {c}", DegenerateSplit)
            continue
        uni.append(LeafRule([(c, float(t.threshold[0]), True)]))
    for a, b in combinations(cols, 2):
        rule = _pair_leaf(data, a, b, min_leaf, deep_leaf)
        if rule is None:
            warnings.warn(f"PLTR: no two-split tree for ({a}, {b})", DegenerateSplit)
            continue
        bi.append(rule)
    model = PltrModel(cols, uni, bi, np.zeros(0), 0.0)
    D = model.design(data)
    keep = D.std(axis=0) > 0
    mu = D.mean(axis=0)
    sd = np.where(keep, D.std(axis=0), 1.0)
    Ds = (D - mu) / sd
    Ds[:, ~keep] = 0.0
    y = data.y.astype(int)
    folds = StratifiedKFold(k, shuffle=True, random_state=int(seed) % (2**32))
    ridge = LogisticRegressionCV(Cs=n_cs, cv=folds, penalty="l2", scoring="neg_log_loss",
                                 max_iter=5000).fit(Ds, y)
    w = 1.0 / np.maximum(np.abs(ridge.coef_[0]), 1e-8)   # nu = 1
    Dw = Ds / w
    lasso = LogisticRegressionCV(Cs=n_cs, cv=folds, penalty="l1", solver="liblinear",
                                 scoring="neg_log_loss", max_iter=5000,
                                 random_state=int(seed) % (2**32)).fit(Dw, y)
    beta_s = lasso.coef_[0] / w
    coef = np.where(keep, beta_s / sd, 0.0)
    icpt = float(lasso.intercept_[0] - coef @ mu)
    model.coefficients = coef
    model.intercept = icpt
    model.selection = {"C_ridge": float(ridge.C_[0]), "C_lasso": float(lasso.C_[0]),
                       "n_indicators": len(uni) + len(bi), "nonzero": int((coef != 0).sum())}
    return model
