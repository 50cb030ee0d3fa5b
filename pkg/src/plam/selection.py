"""Variable selection for linear regressions: lasso, adaptive lasso and a
general-to-specific (GETS) search with target-size control.

The lasso objective is ``(1/2n)||y - Xb||^2 + lam * sum_j w_j |b_j|`` on
internally standardized columns and a centered target, so ``lam`` is on the
same scale as ``max|X'y|/n``.  Coefficients are reported on the original
scale together with an unpenalized intercept.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import linalg, stats

N_LAMBDA = 100
LAMBDA_RATIO = 1e-4
CD_TOL = 1e-12    # on max_j G_jj * (change in beta_j)^2, relative to var(y)
CD_MAX_SWEEPS = 100_000
NODE_CAP = 10_000
MAX_BRANCHES = 8
DIAG_LEVEL = 0.01


@dataclass
class SelectionResult:
    method: str
    retained: list
    coefficients: np.ndarray
    tuning: dict
    intercept: float = 0.0
    path: object = None
    diagnostics: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "retained": list(self.retained),
            "coefficients": [float(c) for c in self.coefficients],
            "intercept": float(self.intercept),
            "tuning": self.tuning,
            "diagnostics": [list(d) for d in self.diagnostics],
            "flags": self.flags,
        }


@dataclass
class CvCurve:
    lambdas: np.ndarray        # descending
    mean_error: np.ndarray
    se_error: np.ndarray
    lambda_min: float
    lambda_1se: float
    folds: np.ndarray


@dataclass
class LassoFit:
    coefficients: np.ndarray   # original scale, zero for dropped columns
    intercept: float
    lam: float
    n_sweeps: int
    dropped: list


# ---------------------------------------------------------------- lasso core

@numba.njit(cache=True)
def _exact_step(G, c, lam, w, beta, grad):
    """Move toward the minimizer on the current support and signs.

    On that face the objective is a convex quadratic, so stepping toward
    its minimizer lowers the lasso objective until a coordinate reaches
    zero; the step stops there and drops it.  Returns 1 for a full jump,
    0 for a truncated one, -1 when the face system is singular.
    """
    p = G.shape[0]
    na = 0
    for j in range(p):
        if beta[j] != 0.0:
            na += 1
    if na == 0:
        return -1
    A = np.empty(na, dtype=np.int64)
    k = 0
    for j in range(p):
        if beta[j] != 0.0:
            A[k] = j
            k += 1
    GA = np.empty((na, na))
    rhs = np.empty(na)
    for a in range(na):
        ja = A[a]
        rhs[a] = c[ja] - lam * w[ja] * np.sign(beta[ja])
        for b in range(na):
            GA[a, b] = G[ja, A[b]]
    try:
        sol = np.linalg.solve(GA, rhs)
    except Exception:
        return -1
    t = 1.0
    hit = -1
    for a in range(na):
        if not np.isfinite(sol[a]):
            return -1
        ba = beta[A[a]]
        if sol[a] * ba <= 0.0:
            ta = ba / (ba - sol[a])
            if ta < t:
                t = ta
                hit = a
    for a in range(na):
        ja = A[a]
        beta[ja] += t * (sol[a] - beta[ja])
    if hit >= 0:
        beta[A[hit]] = 0.0
    grad[:] = c - G @ beta
    return 1 if hit < 0 else 0


@numba.njit(cache=True)
def _cd(G, c, lam, w, beta, tol, max_sweeps):
    """Coordinate descent on the covariance form; ``beta`` is updated in place.

    ``G = X'X/n`` with unit diagonal up to zero-variance columns, ``c = X'y/n``.
    Active-set sweeps alternate with exact face steps (``_exact_step``),
    which settle ill-conditioned supports that plain CD crawls through.
    """
    p = G.shape[0]
    grad = c - G @ beta            # c - G beta
    active = np.zeros(p, dtype=np.bool_)
    sweeps = 0
    full = True
    while sweeps < max_sweeps:
        sweeps += 1
        maxd = 0.0
        for j in range(p):
            if not full and not active[j]:
                continue
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            z = grad[j] + gjj * beta[j]
            thr = lam * w[j]
            if z > thr:
                new = (z - thr) / gjj
            elif z < -thr:
                new = (z + thr) / gjj
            else:
                new = 0.0
            d = new - beta[j]
            if d != 0.0:
                for k in range(p):
                    grad[k] -= G[k, j] * d
                beta[j] = new
                ad = gjj * d * d
                if ad > maxd:
                    maxd = ad
            active[j] = new != 0.0
        if maxd < tol:
            if full:
                break
            full = True        # confirm with a sweep over every coordinate
            continue
        full = False
        if sweeps > 2:
            r = _exact_step(G, c, lam, w, beta, grad)
            if r >= 0:
                for j in range(p):
                    active[j] = beta[j] != 0.0
            if r == 1:
                full = True
    return sweeps


@numba.njit(cache=True)
def _cd_path(G, c, lams, w, tol, max_sweeps):
    p = G.shape[0]
    out = np.zeros((lams.shape[0], p))
    beta = np.zeros(p)
    for i in range(lams.shape[0]):
        _cd(G, c, lams[i], w, beta, tol, max_sweeps)
        out[i] = beta
    return out


def _standardize(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be n x p with n = len(y)")
    if X.shape[0] < 2:
        raise ValueError("need at least two rows")
    mx = X.mean(axis=0)
    sx = X.std(axis=0)
    keep = sx > 1e-12 * np.maximum(1.0, np.abs(mx))
    sx = np.where(keep, sx, 1.0)
    Xs = (X - mx) / sx
    Xs[:, ~keep] = 0.0
    my = y.mean()
    return Xs, y - my, mx, sx, my, keep


def _weights(w, p):
    if w is None:
        return np.ones(p)
    w = np.asarray(w, dtype=float)
    if w.shape != (p,) or np.any(w < 0):
        raise ValueError("penalty weights must be a non-negative p-vector")
    return w


def _unscale(b, mx, sx, my):
    coef = b / sx
    return coef, float(my - mx @ coef)


def lambda_max(X, y, weights=None) -> float:
    Xs, yc, *_ = _standardize(X, y)
    w = _weights(weights, Xs.shape[1])
    c = np.abs(Xs.T @ yc) / Xs.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(w > 0, c / w, 0.0)
    return float(r.max()) if r.size else 0.0


def fit_lasso(X, y, lam: float, weights=None, tol: float = CD_TOL) -> LassoFit:
    """Lasso at a single ``lam`` (see module docstring for the scaling)."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    Xs, yc, mx, sx, my, keep = _standardize(X, y)
    n, p = Xs.shape
    dropped = [j for j in range(p) if not keep[j]]
    if dropped:
        warnings.warn(f"zero-variance columns dropped from the lasso: {dropped}")
    w = _weights(weights, p)
    G = Xs.T @ Xs / n
    c = Xs.T @ yc / n
    beta = np.zeros(p)
    sweeps = _cd(G, c, float(lam), w, beta, tol * max(yc @ yc / n, 1e-300), CD_MAX_SWEEPS)
    coef, icpt = _unscale(beta, mx, sx, my)
    return LassoFit(coef, icpt, float(lam), int(sweeps), dropped)


def lasso_kkt(X, y, fit: LassoFit, weights=None) -> tuple:
    """Largest KKT violation on (inactive, active) coordinates, standardized scale."""
    Xs, yc, mx, sx, my, keep = _standardize(X, y)
    w = _weights(weights, Xs.shape[1])
    b = fit.coefficients * sx
    grad = Xs.T @ (yc - Xs @ b) / Xs.shape[0]
    act = (b != 0) & keep
    inact = ~act & keep
    v_in = np.max(np.abs(grad[inact]) - fit.lam * w[inact], initial=0.0)
    v_act = np.max(np.abs(grad[act] - fit.lam * w[act] * np.sign(b[act])), initial=0.0)
    return float(max(v_in, 0.0)), float(v_act)


def lambda_grid(lmax: float, n_lambda: int = N_LAMBDA, ratio: float = LAMBDA_RATIO) -> np.ndarray:
    if lmax <= 0:
        return np.zeros(1)
    return np.exp(np.linspace(np.log(lmax), np.log(lmax * ratio), n_lambda))


def fold_ids(n: int, k: int, seed) -> np.ndarray:
    """Shuffled fold labels 0..k-1 with sizes differing by at most one."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    ids = np.empty(n, dtype=int)
    for f, rows in enumerate(np.array_split(perm, k)):
        ids[rows] = f
    return ids


def _path(X, y, lams, w):
    Xs, yc, mx, sx, my, keep = _standardize(X, y)
    n = Xs.shape[0]
    B = _cd_path(Xs.T @ Xs / n, Xs.T @ yc / n, lams, w, CD_TOL * max(yc @ yc / n, 1e-300), CD_MAX_SWEEPS)
    coefs = B / sx
    icpts = my - coefs @ mx
    return coefs, icpts


def cv_lambda(X, y, k: int = 10, seed=0, weights=None) -> CvCurve:
    """K-fold CV over a 100-point log grid from ``lambda_max`` to ``1e-4 lambda_max``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < 2 * k:
        raise ValueError(f"need n >= 2k (n={n}, k={k})")
    w = _weights(weights, p)
    lams = lambda_grid(lambda_max(X, y, w))
    folds = fold_ids(n, k, seed)
    errs = np.empty((k, lams.size))
    for f in range(k):
        tr, te = folds != f, folds == f
        coefs, icpts = _path(X[tr], y[tr], lams, w)
        pred = X[te] @ coefs.T + icpts
        errs[f] = ((pred - y[te, None]) ** 2).mean(axis=0)
    mean = errs.mean(axis=0)
    se = errs.std(axis=0, ddof=1) / np.sqrt(k)
    i_min = int(np.argmin(mean))
    ok = np.nonzero(mean <= mean[i_min] + se[i_min])[0]
    i_1se = int(ok.min())                 # grid is descending: smallest index = largest lambda
    return CvCurve(lams, mean, se, float(lams[i_min]), float(lams[i_1se]), folds)


def _names(names, p):
    return list(names) if names is not None else [f"x{j + 1}" for j in range(p)]


def _as_result(method, fit: LassoFit, names, tuning, curve=None) -> SelectionResult:
    nz = np.nonzero(fit.coefficients)[0]
    return SelectionResult(
        method=method,
        retained=[names[j] for j in nz],
        coefficients=fit.coefficients[nz],
        intercept=fit.intercept,
        tuning=tuning,
        path=curve,
    )


def lasso_select(X, y, names=None, rule: str = "min", k: int = 10, seed=0,
                 weights=None, method: str = "lasso") -> SelectionResult:
    """Cross-validate lambda, refit on all rows and report the nonzero set."""
    if rule not in ("min", "1se"):
        raise ValueError("rule must be 'min' or '1se'")
    X = np.asarray(X, dtype=float)
    names = _names(names, X.shape[1])
    if X.shape[1] == 0:
        return SelectionResult(method, [], np.zeros(0), {"rule": rule, "lambda": 0.0},
                               intercept=float(np.mean(y)))
    curve = cv_lambda(X, y, k, seed, weights)
    lam = curve.lambda_min if rule == "min" else curve.lambda_1se
    fit = fit_lasso(X, y, lam, weights)
    return _as_result(method, fit, names, {"rule": rule, "lambda": lam, "k": k, "seed": seed}, curve)


def ridge_gcv(X, y):
    """Ridge on standardized columns with the penalty chosen by GCV.

    Returns standardized-scale coefficients and the selected penalty.
    """
    Xs, yc, *_ = _standardize(X, y)
    n = Xs.shape[0]
    u, d, vt = np.linalg.svd(Xs, full_matrices=False)
    uy = u.T @ yc
    resid0 = yc @ yc - uy @ uy
    d2 = d * d
    grid = np.logspace(-6, 6, 121) * max(d2.mean(), 1e-300)
    best = None
    for kap in grid:
        f = d2 / (d2 + kap)
        rss = resid0 + (((1 - f) * uy) ** 2).sum()
        g = n * rss / (n - f.sum()) ** 2
        if best is None or g < best[0]:
            best = (g, kap)
    kap = best[1]
    beta = vt.T @ (d / (d2 + kap) * uy)
    return beta, float(kap)


def adaptive_weights(X, y, nu: float = 1.0):
    beta, kap = ridge_gcv(X, y)
    mag = np.abs(beta)
    mag = np.maximum(mag, 1e-12 * max(mag.max(initial=0.0), 1e-300))
    return mag ** (-nu), kap


def fit_adaptive_lasso(X, y, names=None, nu: float = 1.0, lambda_rule: str = "min",
                       k: int = 10, seed=0) -> SelectionResult:
    """Adaptive lasso with ridge initial estimates (GCV ridge penalty)."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    X = np.asarray(X, dtype=float)
    if X.shape[1] == 0:
        return lasso_select(X, y, names, lambda_rule, k, seed, method="adaptive-lasso")
    w, kap = adaptive_weights(X, y, nu)
    res = lasso_select(X, y, names, lambda_rule, k, seed, weights=w, method="adaptive-lasso")
    res.tuning.update({"nu": nu, "ridge_penalty": kap})
    return res


# ----------------------------------------------------------- diagnostics

def _ols_rss(A, b):
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    r = b - A @ coef
    return float(r @ r), coef


def _rank(A):
    if A.shape[1] == 0:
        return 0
    return int(np.linalg.matrix_rank(A))


def white_test(resid, X):
    """White's heteroskedasticity LM test, ``n R^2`` of e^2 on levels, squares, cross-products.

    Cross-products are dropped when the auxiliary regression would leave
    fewer than ten residual degrees of freedom.
    """
    e2 = np.asarray(resid, dtype=float) ** 2
    n = e2.size
    X = np.asarray(X, dtype=float).reshape(n, -1)
    k = X.shape[1]
    if k == 0:
        return 0.0, 1.0
    Xs = (X - X.mean(axis=0)) / np.where(X.std(axis=0) > 0, X.std(axis=0), 1.0)
    blocks = [np.ones((n, 1)), Xs, Xs ** 2]
    if 1 + 2 * k + k * (k - 1) // 2 <= n - 10:
        iu = np.triu_indices(k, 1)
        blocks.append(Xs[:, iu[0]] * Xs[:, iu[1]])
    A = np.column_stack(blocks)
    df = _rank(A) - 1
    if df <= 0:
        return 0.0, 1.0
    tss = float(((e2 - e2.mean()) ** 2).sum())
    if tss <= 0:
        return 0.0, 1.0
    rss, _ = _ols_rss(A, e2)
    stat = n * (1.0 - rss / tss)
    return float(stat), float(stats.chi2.sf(stat, df))


def doornik_hansen(resid):
    """Doornik-Hansen omnibus normality test (transformed skewness and kurtosis)."""
    e = np.asarray(resid, dtype=float)
    n = e.size
    if n < 8:
        return 0.0, 1.0
    d = e - e.mean()
    m2 = (d * d).mean()
    if m2 <= 0:
        return 0.0, 1.0
    sk = (d ** 3).mean() / m2 ** 1.5
    b2 = (d ** 4).mean() / m2 ** 2
    b1 = sk * sk
    beta = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2.0) * (n + 5) * (n + 7) * (n + 9))
    w2 = -1.0 + math.sqrt(2.0 * (beta - 1.0))
    delta = 1.0 / math.sqrt(math.log(math.sqrt(w2)))
    yy = sk * math.sqrt((w2 - 1.0) * (n + 1) * (n + 3) / (12.0 * (n - 2)))
    z1 = delta * math.log(yy + math.sqrt(yy * yy + 1.0))
    dk = (n - 3.0) * (n + 1) * (n * n + 15 * n - 4)
    a = (n - 2.0) * (n + 5) * (n + 7) * (n * n + 27 * n - 70) / (6.0 * dk)
    c = (n - 7.0) * (n + 5) * (n + 7) * (n * n + 2 * n - 5) / (6.0 * dk)
    kk = (n + 5.0) * (n + 7) * (n ** 3 + 37 * n * n + 11 * n - 313) / (12.0 * dk)
    alpha = a + b1 * c
    chi = 2.0 * kk * (b2 - 1.0 - b1)
    z2 = (np.cbrt(chi / (2.0 * alpha)) - 1.0 + 1.0 / (9.0 * alpha)) * math.sqrt(9.0 * alpha)
    stat = z1 * z1 + z2 * z2
    return float(stat), float(stats.chi2.sf(stat, 2))


def reset_test(resid, X, fitted):
    """RESET F test for adding squared and cubed fitted values."""
    e = np.asarray(resid, dtype=float)
    n = e.size
    X = np.asarray(X, dtype=float).reshape(n, -1)
    f = np.asarray(fitted, dtype=float)
    sd = f.std()
    if X.shape[1] == 0 or sd <= 1e-12 * max(1.0, abs(f.mean())):
        return 0.0, 1.0
    z = (f - f.mean()) / sd
    base = np.column_stack([np.ones(n), X])
    A = np.column_stack([base, z ** 2, z ** 3])
    q = _rank(A) - _rank(base)
    dof = n - _rank(A)
    if q <= 0 or dof <= 0:
        return 0.0, 1.0
    rss_r, _ = _ols_rss(base, e)
    rss_u, _ = _ols_rss(A, e)
    if rss_u <= 0:
        return float("inf"), 0.0
    F = max((rss_r - rss_u) / q / (rss_u / dof), 0.0)
    return float(F), float(stats.f.sf(F, q, dof))


def diagnostic_battery(residuals, X_terminal, fitted=None) -> list:
    """White, Doornik-Hansen and RESET; the battery passes iff every p > 0.01.

    ``fitted`` defaults to zeros, which makes RESET vacuous.
    """
    e = np.asarray(residuals, dtype=float)
    X = np.asarray(X_terminal, dtype=float).reshape(e.size, -1)
    f = np.zeros_like(e) if fitted is None else np.asarray(fitted, dtype=float)
    out = [("white",) + white_test(e, X), ("normality",) + doornik_hansen(e),
           ("reset",) + reset_test(e, X, f)]
    return out


def battery_passes(diags, enforced=None, level: float = DIAG_LEVEL) -> bool:
    return all(p > level for name, _, p in diags if enforced is None or name in enforced)


# ------------------------------------------------------------------ GETS

class _Gram:
    """OLS on column subsets from a shared cross-product matrix (column 0 = intercept)."""

    def __init__(self, X, y):
        n = X.shape[0]
        self.n = n
        # centre and scale for conditioning; the intercept absorbs the shift
        mx = X.mean(axis=0)
        sx = X.std(axis=0)
        sx = np.where(sx > 0, sx, 1.0)
        self.mx, self.sx = mx, sx
        Z = np.column_stack([np.ones(n), (X - mx) / sx])
        self.Z = Z
        self.A = Z.T @ Z
        self.b = Z.T @ y
        self.y = y
        self.yy = float(y @ y)
        self._cache = {}

    def fit(self, cols: tuple):
        hit = self._cache.get(cols)
        if hit is not None:
            return hit
        idx = (0,) + tuple(c + 1 for c in cols)
        A = self.A[np.ix_(idx, idx)]
        b = self.b[list(idx)]
        try:
            cf = linalg.cho_factor(A, check_finite=False)
            beta = linalg.cho_solve(cf, b, check_finite=False)
            inv_diag = np.diag(linalg.cho_solve(cf, np.eye(len(idx)), check_finite=False))
        except linalg.LinAlgError:
            beta = np.linalg.lstsq(A, b, rcond=None)[0]
            inv_diag = np.diag(np.linalg.pinv(A))
        # RSS from the residual vector keeps full precision
        r = self.y - self.Z[:, list(idx)] @ beta
        rss = float(r @ r)
        dof = self.n - len(idx)
        s2 = rss / max(dof, 1)
        se = np.sqrt(np.maximum(s2 * inv_diag[1:], 1e-300))
        t = beta[1:] / se
        out = (beta, rss, dof, t)
        self._cache[cols] = out
        return out

    def original(self, cols, beta):
        coef = beta[1:] / self.sx[list(cols)]
        icpt = beta[0] - float(coef @ self.mx[list(cols)])
        return coef, icpt


def _schwarz(rss, n, k):
    return math.log(max(rss, 1e-300) / n) + k * math.log(n) / n


def _drop_collinear(X, names):
    if X.shape[1] == 0:
        return X, names, []
    Xc = X - X.mean(axis=0)
    _, R, piv = linalg.qr(Xc, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = d.max() * max(X.shape) * np.finfo(float).eps * 1e3 if d.size else 0
    keep = np.sort(piv[d > tol])
    dropped = [names[j] for j in range(X.shape[1]) if j not in set(keep)]
    if dropped:
        warnings.warn(f"GETS: collinear or constant columns removed from the GUM: {dropped}")
    return X[:, keep], [names[j] for j in keep], dropped


def gets_select(X, y, alpha: float = 0.05, names=None, max_branches: int = MAX_BRANCHES,
                node_cap: int = NODE_CAP, diagnostics: bool = True) -> SelectionResult:
    """General-to-specific reduction of the OLS model ``y ~ 1 + X``.

    The search starts from the general unrestricted model (GUM) and removes
    one insignificant regressor at a time.  The root branches on up to
    ``max_branches`` insignificant regressors (largest p-value first); below
    the root every path deletes the least significant regressor whose removal
    keeps the F test of the reduced model against the GUM above ``alpha``.
    A path ends when no regressor is insignificant, or when no removal is
    admissible.  Terminal models must pass the diagnostic battery on those
    tests the GUM itself passes; a failing terminal is replaced by its
    nearest passing ancestor.  The terminal with the smallest Schwarz
    criterion wins (ties: fewer regressors, then column order).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    names = _names(names, X.shape[1])
    X, names, dropped = _drop_collinear(X, names)
    K = X.shape[1]
    if n <= K + 10:
        raise ValueError(f"GUM needs n > K + 10 (n={n}, K={K})")
    g = _Gram(X, y)
    gum = tuple(range(K))
    _, rss_gum, dof_gum, _ = g.fit(gum)

    def diag_of(cols):
        beta, rss, dof, t = g.fit(cols)
        idx = [0] + [c + 1 for c in cols]
        fitted = g.Z[:, idx] @ beta
        return diagnostic_battery(y - fitted, X[:, list(cols)], fitted)

    enforced = None
    gum_diag = []
    if diagnostics:
        gum_diag = diag_of(gum)
        enforced = {name for name, _, p in gum_diag if p > DIAG_LEVEL}

    def encompasses(cols):
        if cols == gum:
            return True
        _, rss, _, _ = g.fit(cols)
        q = K - len(cols)
        F = max((rss - rss_gum) / q / (rss_gum / dof_gum), 0.0)
        return stats.f.sf(F, q, dof_gum) > alpha

    def insignificant(cols):
        _, _, dof, t = g.fit(cols)
        crit = stats.t.ppf(1.0 - alpha / 2.0, max(dof, 1))
        p = 2.0 * stats.t.sf(np.abs(t), max(dof, 1))
        order = sorted((i for i in range(len(cols)) if abs(t[i]) < crit),
                       key=lambda i: (-p[i], cols[i]))
        return [cols[i] for i in order]

    nodes = 0
    terminals = {}
    diag_cache = {}

    def congruent(cols):
        if not diagnostics:
            return True
        if cols not in diag_cache:
            diag_cache[cols] = diag_of(cols)
        return battery_passes(diag_cache[cols], enforced)

    def finish(path):
        for cols in reversed(path):
            if congruent(cols):
                terminals[cols] = True
                return

    def descend(cols, path, width):
        nonlocal nodes
        while True:
            nodes += 1
            children = []
            for v in insignificant(cols):
                if nodes >= node_cap:
                    break
                child = tuple(c for c in cols if c != v)
                nodes += 1
                if encompasses(child):
                    children.append(child)
                    if len(children) >= width:
                        break
            if not children:
                finish(path)
                return
            if width > 1:
                for child in children:
                    descend(child, path + [child], 1)
                return
            cols = children[0]
            path = path + [cols]

    descend(gum, [gum], max_branches)

    if not terminals:
        warnings.warn("GETS: no congruent reduction; returning the GUM")
        best = gum
        flags = {"no_valid_reduction": True}
    else:
        flags = {"no_valid_reduction": False}
        best = min(terminals, key=lambda c: (_schwarz(g.fit(c)[1], n, len(c) + 1), len(c), c))
    beta, rss, dof, t = g.fit(best)
    coef, icpt = g.original(best, beta)
    diags = diag_cache.get(best) if diagnostics else []
    if diagnostics and diags is None:
        diags = diag_of(best)
    flags.update({"nodes": nodes, "terminals": len(terminals), "dropped_collinear": dropped,
                  "gum_diagnostics": [list(d) for d in gum_diag]})
    return SelectionResult(
        method="gets",
        retained=[names[c] for c in best],
        coefficients=coef,
        intercept=icpt,
        tuning={"alpha": alpha},
        diagnostics=diags,
        flags=flags,
    )


def fit_ols_subset(X, y, cols):
    """Plain OLS (with intercept) of ``y`` on the listed columns of ``X``."""
    A = np.column_stack([np.ones(len(y)), np.asarray(X, dtype=float)[:, list(cols)]])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef[1:], float(coef[0])
