"""Partial linear models with selected interactions (GAMLA / GAMA).

Two steps.  First, ``y`` and every candidate interaction ``Z_s = X_j X_k``
are regressed on the additive smooth part with a GAM, giving the double
residuals ``u_y`` and ``v_Z``.  Second, a selector (lasso, adaptive lasso or
GETS) picks interactions from the regression of ``u_y`` on ``v_Z``, and the
final model refits the smooths jointly with the retained interactions.
The "naive" variants skip the residualisation of ``Z`` and select on the raw
interactions instead.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .basis import DEFAULT_DIM
from .data import Dataset, is_constant
from .errors import ConcurvityViolation, NoConvergence, UnknownVariable
from .gam import AdditiveModel, Backfitter, fit_gam
from .selection import SelectionResult, fit_adaptive_lasso, gets_select, lasso_select

CONCURVITY_TOL = 1e-8
VIOLATION_SHARE = 0.20
QUANTILE_LEVELS = np.linspace(0.0, 1.0, 201)
DEFAULT_CONTEXT = (0.025, 0.5, 0.975)
ENGINES = ("lasso", "adaptive-lasso", "gets")


@dataclass
class Interactions:
    names: list
    Z: np.ndarray
    collinear: list = field(default_factory=list)
    dropped: list = field(default_factory=list)


@dataclass
class DoubleResiduals:
    u_y: np.ndarray
    v_Z: np.ndarray
    names: list
    Z: np.ndarray
    gram_check: float
    first_stage: dict = field(default_factory=dict)


@dataclass
class ConcurvityReport:
    ok: bool
    min_eig: float
    max_eig: float
    offending: list


@dataclass
class PartialLinearModel:
    final_fit: AdditiveModel
    selection: SelectionResult
    interaction_catalog: list
    first_stage: dict
    variant: str
    config: dict = field(default_factory=dict)
    quantiles: dict = field(default_factory=dict)

    @property
    def selected(self) -> list:
        return list(self.selection.retained)

    def predict(self, data: Dataset) -> np.ndarray:
        return self.final_fit.predict(data)


def model_vars(data: Dataset):
    """Smooth (continuous) and linear (binary or excluded, non-constant) features."""
    smooth = data.of_kind("continuous")
    linear = [c for c in data.of_kind("binary", "excluded") if not is_constant(data, c)]
    return smooth, linear


def interaction_columns(data: Dataset) -> list:
    return [c for c in data.columns if not is_constant(data, c)]


def build_interactions(data: Dataset, columns=None) -> Interactions:
    """All pairwise products of the non-constant features, lexicographic by position."""
    cols = list(columns) if columns is not None else interaction_columns(data)
    names, blocks, dropped = [], [], []
    for a, b in combinations(cols, 2):
        v = data.column(a) * data.column(b)
        name = f"{a}:{b}"
        if np.all(v == v[0]):
            dropped.append(name)
            continue
        names.append(name)
        blocks.append(v)
    if dropped:
        warnings.warn(f"constant interaction columns dropped: {dropped}")
    Z = np.column_stack(blocks) if blocks else np.empty((data.n, 0))
    return Interactions(names, Z, _collinear(Z, names), dropped)


def _collinear(Z, names):
    if Z.shape[1] < 2:
        return []
    Zc = Z - Z.mean(axis=0)
    norms = np.linalg.norm(Zc, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    C = (Zc / norms).T @ (Zc / norms)
    i, j = np.nonzero(np.triu(np.abs(C) > 1.0 - 1e-10, 1))
    return [(names[a], names[b]) for a, b in zip(i, j)]


def double_residuals(data: Dataset, inter: Interactions | None = None, dim: int = DEFAULT_DIM,
                     smooth_vars=None, linear_vars=None) -> DoubleResiduals:
    """GAM residuals of ``y`` and of every interaction on the same additive part.

    The fits share one design and are run as a single batched backfit; the
    smoothing parameters are still chosen separately for every response.
    Columns whose first-stage fit does not converge are removed.
    """
    if data.y is None:
        raise ValueError("dataset has no target")
    inter = inter if inter is not None else build_interactions(data)
    sv, lv = model_vars(data)
    smooth_vars = sv if smooth_vars is None else list(smooth_vars)
    linear_vars = lv if linear_vars is None else list(linear_vars)
    bf = Backfitter(data, smooth_vars, linear_vars, dim)
    Y = np.column_stack([data.y, inter.Z])
    res = bf.run(Y)
    if not res.converged[0]:
        raise NoConvergence("first-stage GAM for the target did not converge",
                            trace=[float(o[0]) for o in res.objective])
    smooth_total = sum(res.smooth_fits) if res.smooth_fits else np.zeros_like(Y)
    fitted = smooth_total + bf.U @ (bf.U.T @ (Y - smooth_total))
    resid = Y - fitted
    keep = np.ones(Y.shape[1], dtype=bool)
    failed = [inter.names[s - 1] for s in range(1, Y.shape[1]) if not res.converged[s]]
    if failed:
        warnings.warn(f"first-stage fits did not converge, dropped: {failed}")
        for s in range(1, Y.shape[1]):
            keep[s] = res.converged[s]
    idx = np.nonzero(keep[1:])[0]
    names = [inter.names[i] for i in idx]
    v = resid[:, 1:][:, idx]
    first = {
        "smooth_vars": [b.variable_id for b in bf.bases],
        "linear_vars": list(bf.linear_names),
        "demoted": list(bf.demoted),
        "edf_y": [float(e) for e in res.edf[:, 0]],
        "cycles": int(res.n_cycles),
        "failed": failed,
        "edf_total_by_column": {nm: float(res.edf[:, 1 + i].sum()) for nm, i in zip(names, idx)},
    }
    return DoubleResiduals(resid[:, 0], v, names, inter.Z[:, idx], _min_rel_eig(v, inter.Z[:, idx]), first)


def _scaled_gram(v, Z):
    """Gram of v_Z on the correlation scale, plus each column's retained share of ``Z``'s spread."""
    vc = v - v.mean(axis=0)
    zc = Z - Z.mean(axis=0)
    vn = np.sqrt((vc * vc).sum(axis=0))
    zn = np.sqrt((zc * zc).sum(axis=0))
    share = np.where(zn > 0, vn / np.where(zn > 0, zn, 1.0), 0.0)
    safe = np.where(vn > 0, vn, 1.0)
    M = (vc / safe).T @ (vc / safe)
    return M, share


def _min_rel_eig(v, Z=None):
    if v.shape[1] == 0:
        return float("inf")
    M, _ = _scaled_gram(v, v if Z is None else Z)
    ev = np.linalg.eigvalsh(M)
    return float(ev[0] / ev[-1]) if ev[-1] > 0 else 0.0


def check_concurvity(dr: DoubleResiduals, tol: float = CONCURVITY_TOL) -> ConcurvityReport:
    """Positive-definiteness check of the residualized candidates' Gram matrix.

    Columns are put on a common scale first, so the relative-eigenvalue
    threshold ``tol`` does not depend on units.  A column whose residual
    norm is below ``sqrt(tol)`` of its raw norm is concurve on its own;
    the rest are removed greedily (largest loading on the smallest
    eigenvector) until the remainder is well conditioned.
    """
    v = dr.v_Z
    if v.shape[1] == 0:
        return ConcurvityReport(True, float("inf"), float("inf"), [])
    M, share = _scaled_gram(v, dr.Z)
    ev = np.linalg.eigvalsh(M)
    lo, hi = float(ev[0]), float(ev[-1])
    flat = share <= np.sqrt(tol)
    if not flat.any() and hi > 0 and lo > tol * hi:
        return ConcurvityReport(True, lo, hi, [])
    offending = [dr.names[j] for j in np.nonzero(flat)[0]]
    alive = [j for j in range(v.shape[1]) if not flat[j]]
    while alive:
        w, U = np.linalg.eigh(M[np.ix_(alive, alive)])
        top = max(w[-1], 0.0)
        if top > 0 and w[0] > tol * top:
            break
        j = alive[int(np.argmax(np.abs(U[:, 0])))]
        offending.append(dr.names[j])
        alive.remove(j)
    return ConcurvityReport(False, lo, hi, offending)


def _select(engine, X, y, names, tuning, seed, k):
    if engine == "lasso":
        return lasso_select(X, y, names, tuning.get("lambda", "min"), k, seed)
    if engine == "adaptive-lasso":
        return fit_adaptive_lasso(X, y, names, tuning.get("nu", 1.0), tuning.get("lambda", "min"), k, seed)
    if engine == "gets":
        return gets_select(X, y, float(tuning.get("alpha", 0.05)), names)
    raise ValueError(f"unknown selection engine {engine!r}")


def select_interactions(dr: DoubleResiduals, engine: str, tuning: dict, naive: bool = False,
                        seed=0, k: int = 10) -> SelectionResult:
    """Step two on precomputed double residuals (raw ``Z`` for the naive variant)."""
    names = list(dr.names)
    X = dr.Z if naive else dr.v_Z
    keep = list(range(len(names)))
    if not naive:
        rep = check_concurvity(dr)
        if not rep.ok:
            if len(rep.offending) > VIOLATION_SHARE * len(names):
                raise ConcurvityViolation(
                    f"{len(rep.offending)} of {len(names)} interactions are concurve with the smooths: "
                    f"{rep.offending}")
            warnings.warn(f"concurve interactions removed before selection: {rep.offending}")
            keep = [i for i, nm in enumerate(names) if nm not in set(rep.offending)]
    res = _select(engine, X[:, keep], dr.u_y, [names[i] for i in keep], tuning, seed, k)
    res.flags["candidates"] = len(keep)
    return res


def refit(data: Dataset, selected, dim: int = DEFAULT_DIM, family: str = "gaussian") -> AdditiveModel:
    """Final GAM: smooths on the continuous features plus linear selected interactions."""
    smooth, linear = model_vars(data)
    return fit_gam(data, smooth, linear + list(selected), family=family, dim=dim)


def training_quantiles(data: Dataset) -> dict:
    return {c: np.quantile(data.column(c), QUANTILE_LEVELS).tolist() for c in data.columns}


def assemble(data: Dataset, dr: DoubleResiduals, sel: SelectionResult, variant: str,
             config: dict, dim: int = DEFAULT_DIM, family: str = "gaussian") -> PartialLinearModel:
    final = refit(data, sel.retained, dim, family)
    return PartialLinearModel(final, sel, list(dr.names), dr.first_stage, variant,
                              dict(config), training_quantiles(data))


def _variant(engine, naive):
    base = {"lasso": "gamla", "adaptive-lasso": "gamla-alasso", "gets": "gama"}[engine]
    return base + "*" if naive else base


def fit_partial_linear(data: Dataset, engine: str, tuning: dict | None = None, naive: bool = False,
                       seed=0, k: int = 10, dim: int = DEFAULT_DIM, family: str = "gaussian",
                       dr: DoubleResiduals | None = None) -> PartialLinearModel:
    tuning = dict(tuning or {})
    dr = dr if dr is not None else double_residuals(data, dim=dim)
    sel = select_interactions(dr, engine, tuning, naive, seed, k)
    config = {"engine": engine, "tuning": tuning, "naive": naive, "seed": seed, "k": k,
              "dim": dim, "family": family}
    return assemble(data, dr, sel, _variant(engine, naive), config, dim, family)


def fit_gamla(data: Dataset, method: str = "lasso", lambda_rule: str = "min", seed=0, **kw):
    if method not in ("lasso", "adaptive-lasso"):
        raise ValueError("method must be 'lasso' or 'adaptive-lasso'")
    return fit_partial_linear(data, method, {"lambda": lambda_rule}, False, seed, **kw)


def fit_gama(data: Dataset, alpha: float = 0.05, seed=0, **kw):
    return fit_partial_linear(data, "gets", {"alpha": alpha}, False, seed, **kw)


def fit_naive_variants(data: Dataset, engine: str = "gets", tuning: dict | None = None, seed=0, **kw):
    return fit_partial_linear(data, engine, tuning, True, seed, **kw)


@dataclass
class MarginalEffectCurve:
    variable: str
    grid: np.ndarray
    base: np.ndarray
    contexts: list          # (label, c_j, curve)

    def rows(self):
        out = [(float(x), "base", float(v)) for x, v in zip(self.grid, self.base)]
        for label, _, curve in self.contexts:
            out.extend((float(x), label, float(v)) for x, v in zip(self.grid, curve))
        return out


def _quantile(model: PartialLinearModel, column: str, level: float, data: Dataset | None):
    if data is not None:
        return float(np.quantile(data.column(column), level))
    table = model.quantiles.get(column)
    if table is None:
        raise UnknownVariable(f"no training quantiles stored for {column!r}")
    return float(np.interp(level, QUANTILE_LEVELS, table))


def interaction_slope(model, variable: str, level: float, data: Dataset | None = None) -> float:
    """``c_j``: derivative contribution of retained interactions involving ``variable``."""
    fit = getattr(model, "final_fit", model)
    c = 0.0
    for name, coef in fit.linear_terms.items():
        parts = name.split(":")
        if len(parts) != 2 or variable not in parts:
            continue
        other = parts[1] if parts[0] == variable else parts[0]
        c += coef * _quantile(model, other, level, data)
    return c


def marginal_effects(model: PartialLinearModel, variable: str, grid, context=DEFAULT_CONTEXT,
                     data: Dataset | None = None) -> MarginalEffectCurve:
    """Base curve ``g_j'`` plus one parallel shift per context quantile level.

    The shift sums ``gamma_jk * Q_k(level)`` over the retained interactions
    ``X_j X_k``; quantiles come from the training data (stored on the model).
    """
    fit = model.final_fit
    term = fit.smooth(variable)
    grid = np.asarray(grid, dtype=float)
    base = term.derivative(grid)
    rows = []
    for level in context:
        c = interaction_slope(model, variable, level, data)
        rows.append((f"q{level:g}", c, base + c))
    return MarginalEffectCurve(variable, grid, base, rows)
