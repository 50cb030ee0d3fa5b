"""Randomized oracle checks shared by the unit suite and acceptance criterion 8.

Every check returns ``(ok, detail)`` so the acceptance test can print one
line per item while the unit tests simply assert.
"""
from __future__ import annotations

import itertools
import warnings

import numpy as np

from plam.baselines import fit_tree
from plam.data import Dataset
from plam.evaluation import auc, gauge, mcs, potency
from plam.gam import fit_gam, smooth_curve
from plam.gamla import fit_gama, marginal_effects
from plam.selection import cv_lambda, fit_lasso, lambda_max, lasso_kkt
from plam.simulation import eval_g


def _standardize(X, y):
    mx, sx = X.mean(axis=0), X.std(axis=0)
    return (X - mx) / sx, y - y.mean(), sx


def check_lasso_kkt(n_instances=100, seed=0, tol=1e-6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        n = int(rng.integers(20, 120))
        p = int(rng.integers(2, 30))
        X = rng.standard_normal((n, p)) @ (np.eye(p) + 0.5 * rng.standard_normal((p, p)) / np.sqrt(p))
        beta = rng.standard_normal(p) * (rng.random(p) < 0.3)
        y = X @ beta + rng.standard_normal(n)
        lam = lambda_max(X, y) * float(rng.choice([0.9, 0.5, 0.1, 0.01, 1e-3]))
        fit = fit_lasso(X, y, lam)
        v_in, v_act = lasso_kkt(X, y, fit)
        worst = max(worst, v_in, v_act)
    return worst <= tol, f"max KKT violation {worst:.2e} over {n_instances} instances"


def sign_enumeration_lasso(X, y, lam):
    """Exact lasso by enumerating sign patterns (standardized scale)."""
    Xs, yc, _ = _standardize(X, y)
    n, p = Xs.shape
    G, c = Xs.T @ Xs / n, Xs.T @ yc / n
    best, best_b = np.inf, None
    for signs in itertools.product((-1, 0, 1), repeat=p):
        s = np.array(signs, dtype=float)
        A = np.nonzero(s)[0]
        b = np.zeros(p)
        if A.size:
            try:
                b[A] = np.linalg.solve(G[np.ix_(A, A)], c[A] - lam * s[A])
            except np.linalg.LinAlgError:
                continue
            if np.any(np.sign(b[A]) != s[A]):
                continue
        r = yc - Xs @ b
        obj = r @ r / (2 * n) + lam * np.abs(b).sum()
        if obj < best:
            best, best_b = obj, b
    return best_b


def check_lasso_oracle(n_instances=20, seed=1, tol=1e-6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        X = rng.standard_normal((5, 3))
        y = X @ rng.standard_normal(3) + 0.3 * rng.standard_normal(5)
        lam = lambda_max(X, y) * float(rng.uniform(0.05, 0.8))
        fit = fit_lasso(X, y, lam)
        oracle = sign_enumeration_lasso(X, y, lam)
        _, _, sx = _standardize(X, y)
        worst = max(worst, float(np.abs(fit.coefficients * sx - oracle).max()))
    return worst <= tol, f"max |coef - oracle| {worst:.2e} over {n_instances} 5x3 problems"


def brute_auc(scores, labels):
    s = np.clip(np.asarray(scores, dtype=float), 0, 1)
    pos, neg = s[labels == 1], s[labels == 0]
    tot = 0.0
    for a in pos:
        tot += np.sum(a > neg) + 0.5 * np.sum(a == neg)
    return tot / (pos.size * neg.size)


def check_auc_oracle(n_instances=50, seed=2, tol=1e-12):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        n = int(rng.integers(4, 200))
        y = (rng.random(n) < 0.4).astype(float)
        y[0], y[1] = 0, 1
        s = rng.normal(0.5, 0.4, n)
        if i % 2:                       # ties
            s = np.round(s, 1)
        worst = max(worst, abs(auc(s, y) - brute_auc(s, y)))
    return worst <= tol, f"max |rank AUC - brute force| {worst:.1e} over {n_instances} instances"


def _best_split(X, y, min_leaf=1):
    """Exhaustive (sse, feature, threshold) over midpoints of sorted unique values."""
    best = (np.sum((y - y.mean()) ** 2), -1, np.nan)
    for j in range(X.shape[1]):
        u = np.unique(X[:, j])
        for t in (u[:-1] + u[1:]) / 2:
            m = X[:, j] <= t
            if m.sum() < min_leaf or (~m).sum() < min_leaf:
                continue
            sse = np.sum((y[m] - y[m].mean()) ** 2) + np.sum((y[~m] - y[~m].mean()) ** 2)
            if sse < best[0] - 1e-12:
                best = (sse, j, t)
    return best


def greedy_depth2_sse(X, y):
    sse, j, t = _best_split(X, y)
    if j < 0:
        return sse
    m = X[:, j] <= t
    return _best_split(X[m], y[m])[0] + _best_split(X[~m], y[~m])[0]


def check_cart_oracle(n_instances=30, seed=3, tol=1e-9):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        X = rng.standard_normal((30, 3))
        y = np.sin(2 * X[:, 0]) + (X[:, 1] > 0.3) + 0.3 * rng.standard_normal(30)
        d = Dataset.from_arrays(X, y)
        tree = fit_tree(d, max_depth=2, min_leaf=1)
        leaves = tree.leaf_index(X)
        sse = sum(np.sum((y[leaves == l] - y[leaves == l].mean()) ** 2) for l in np.unique(leaves))
        worst = max(worst, abs(sse - greedy_depth2_sse(X, y)))
    return worst <= tol, f"max |tree SSE - enumerated SSE| {worst:.1e} over {n_instances} instances"


def _toy_model(seed, n=300):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, 3))
    y = (np.sin(2 * X[:, 0]) + 0.5 * X[:, 1] ** 2 + 0.8 * X[:, 0] * X[:, 2]
         + 0.3 * rng.standard_normal(n))
    d = Dataset.from_arrays(X, y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit_gama(d, alpha=0.05, seed=seed), d


def check_marginal_fd(n_models=10, seed=4, tol=1e-4):
    worst = 0.0
    for i in range(n_models):
        model, d = _toy_model(seed + i)
        for var in ("x1", "x2"):
            x = d.column(var)
            lo, hi = np.quantile(x, [0.05, 0.95])
            grid = np.linspace(lo, hi, 41)
            h = 1e-4 * (x.max() - x.min())
            fd = (smooth_curve(model.final_fit, var, grid + h)[1]
                  - smooth_curve(model.final_fit, var, grid - h)[1]) / (2 * h)
            curve = marginal_effects(model, var, grid)
            worst = max(worst, float(np.abs(curve.base - fd).max()))
    return worst < tol, f"max |g' - finite difference| {worst:.1e} on {n_models} models"


def check_parallel_curves(seed=5, tol=1e-10):
    model, d = _toy_model(seed)
    grid = np.linspace(-1.5, 1.5, 25)
    worst = 0.0
    shifts = []
    for var in ("x1", "x3"):
        curve = marginal_effects(model, var, grid, (0.025, 0.5, 0.975))
        for _, c, vals in curve.contexts:
            worst = max(worst, float(np.abs(vals - curve.base - c).max()))
            shifts.append(c)
    distinct = len({round(s, 12) for s in shifts}) > 1
    return worst < tol and distinct, f"max deviation from base + c_j {worst:.1e}"


def check_mcs_cases(seed=6, n_seeds=20, B=2000):
    rng = np.random.default_rng(seed)
    alone = 0
    for s in range(n_seeds):
        base = rng.chisquare(2, size=200)
        L = np.column_stack([base, base + 0.3 + 0.1 * rng.random(200), base + 0.4 + 0.1 * rng.random(200)])
        res = mcs(L, alpha=0.2, B=B, seed=s)
        alone += res.surviving == ["m0"]
    same = np.tile(rng.chisquare(2, size=(100, 1)), (1, 4))
    ident = mcs(same, alpha=0.1, B=500, seed=0)
    ok_ident = all(v == 1.0 for v in ident.p_values.values()) and len(ident.surviving) == 4
    ok = alone / n_seeds >= 0.95 and ok_ident
    return ok, f"dominant model alone in {alone}/{n_seeds} seeds; identical columns all p=1: {ok_ident}"


def check_potency_gauge():
    rel = {"x1:x6", "x2:x7", "x3:x8", "x4:x9", "x5:x10"}
    sel = ["x1:x6", "x2:x7", "x3:x8", "x1:x2", "x2:x3", "x3:x4", "x4:x5"]
    cases = [
        (potency(sel, rel), 0.6), (gauge(sel, rel, 45), 0.1),
        (potency(rel, rel), 1.0), (gauge(rel, rel, 45), 0.0),
        (potency([], rel), 0.0), (gauge([], rel, 45), 0.0),
        (potency(["x6:x1"], rel), 0.2),
    ]
    ok = all(abs(a - b) < 1e-12 for a, b in cases)
    return ok, f"{sum(abs(a - b) < 1e-12 for a, b in cases)}/{len(cases)} hand counts match"


def check_backfit_monotone(n_fits=20, seed=7):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_fits):
        n = int(rng.integers(150, 400))
        X = rng.standard_normal((n, 4))
        X[:, 1] += 0.6 * X[:, 0]                        # correlated smooths make backfitting iterate
        y = np.sin(2 * X[:, 0]) + np.tanh(X[:, 1]) + 0.5 * X[:, 3] + 0.4 * rng.standard_normal(n)
        d = Dataset.from_arrays(X, y)
        ref = fit_gam(d, ["x1", "x2", "x3"], ["x4"])
        psi = [s.psi for s in ref.smooths]
        m = fit_gam(d, ["x1", "x2", "x3"], ["x4"], psi=psi, accelerate=False)
        obj = np.asarray(m.objective_trace)
        if obj.size > 1:
            worst = max(worst, float((np.diff(obj) / obj[:-1]).max()))
    return worst <= 1e-10, f"largest relative objective increase {worst:.1e} over {n_fits} fits"


def check_g_values():
    vals = [(eval_g(1, 0.0), 0.0), (eval_g(4, 0.0), 1.0), (eval_g(2, -1.0), -5.0),
            (eval_g(2, 1.0), 0.0), (eval_g(5, 0.0), 0.0),
            (eval_g(3, 1.0), 1.0 / (0.5 * np.sqrt(2 * np.pi)))]
    ok = all(abs(float(a) - b) < 1e-12 for a, b in vals)
    return ok, f"g3(1) = {float(eval_g(3, 1.0)):.6f}"


ALL_CHECKS = {
    "lasso KKT, 100 instances": check_lasso_kkt,
    "lasso vs sign enumeration, 20 instances": check_lasso_oracle,
    "AUC rank vs O(n^2), 50 instances": check_auc_oracle,
    "CART vs brute force, 30 instances": check_cart_oracle,
    "marginal effect vs finite differences, 10 models": check_marginal_fd,
    "parallel marginal-effect curves": check_parallel_curves,
    "MCS dominance and identical columns": check_mcs_cases,
    "potency/gauge hand counts": check_potency_gauge,
    "backfitting objective monotone, 20 fits": check_backfit_monotone,
    "g-function exact values": check_g_values,
}
