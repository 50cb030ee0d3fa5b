"""Additive models ``y = Z gamma + sum_j g_j(X_j) + e`` fitted by backfitting.

Each smooth is a penalized cubic B-spline (see :mod:`plam.basis`) whose
smoothing parameter is chosen by GCV on its partial residual.  The
backfitter is vectorised over several responses sharing one design, which is
what the double-residual first stage needs (one fit for ``y`` and one for
every candidate interaction).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .basis import DEFAULT_DIM, SplineBasis, Spectrum, build_cubic_basis, penalty_matrix
from .data import Dataset, check_schema
from .errors import EmptyModel, NoConvergence, SingularSystem, TooFewDistinctValues, UnknownVariable

GCV_GRID = np.logspace(-6, 6, 30)
GCV_CYCLES = 5
MAX_CYCLES = 200
TOL = 1e-6
RSS_FLOOR = 1e-12


@dataclass(eq=False)
class SmoothTerm:
    basis: SplineBasis
    coefficients: np.ndarray
    psi: float
    edf: float
    # constrained-space quantities kept for the significance summary
    theta: np.ndarray = field(default=None, repr=False)
    gram: np.ndarray = field(default=None, repr=False)
    penalty: np.ndarray = field(default=None, repr=False)

    @property
    def variable(self) -> str:
        return self.basis.variable_id

    def evaluate(self, x) -> np.ndarray:
        return self.basis.raw_design(x) @ self.coefficients

    def derivative(self, x) -> np.ndarray:
        return self.basis.derivative_design(x) @ self.coefficients


@dataclass(eq=False)
class AdditiveModel:
    intercept: float
    linear_terms: dict
    smooths: list
    family: str
    residuals: np.ndarray
    columns: list
    scale: float = float("nan")
    n: int = 0
    edf_total: float = float("nan")
    n_cycles: int = 0
    objective_trace: list = field(default_factory=list)
    demoted: list = field(default_factory=list)

    @property
    def smooth_vars(self) -> list:
        return [s.variable for s in self.smooths]

    def smooth(self, variable: str) -> SmoothTerm:
        for s in self.smooths:
            if s.variable == variable:
                return s
        raise UnknownVariable(f"no smooth term for {variable!r}")

    def predict(self, data: Dataset) -> np.ndarray:
        return predict(self, data)


@dataclass
class BackfitResult:
    smooth_fits: list          # per smooth: n x k fitted values
    smooth_coef: list          # per smooth: m x k constrained coefficients
    linear_coef: np.ndarray    # q x k (intercept first)
    psi: np.ndarray            # n_smooth x k
    edf: np.ndarray            # n_smooth x k
    converged: np.ndarray      # k booleans
    n_cycles: int
    objective: list            # per cycle, k-vector of penalized RSS
    boundary: np.ndarray       # n_smooth x k, GCV optimum on a grid edge


def _gcv_search(spec: Spectrum, c, rss0, n):
    """Vectorised GCV over columns of ``c`` (projections of partial residuals).

    Returns the selected psi per column and a boundary flag.
    """
    c2 = c * c
    # RSS differences below rounding level must not decide the optimum
    floor = RSS_FLOOR * (rss0 + c2.sum(axis=0))
    grid = spec.scale * GCV_GRID
    f = spec.shrink(grid)                                  # G x m
    edf = f.sum(axis=1)
    rss = np.maximum(rss0[None, :] + ((1.0 - f) ** 2) @ c2, floor)   # G x k
    gcv = n * rss / (n - edf)[:, None] ** 2
    idx = np.argmin(gcv, axis=0)
    best_grid = gcv[idx, np.arange(c.shape[1])]
    boundary = (idx == 0) | (idx == len(grid) - 1)

    lg = np.log(grid)
    lo = lg[np.maximum(idx - 1, 0)]
    hi = lg[np.minimum(idx + 1, len(grid) - 1)]

    def crit(lpsi):
        ff = 1.0 / (1.0 + np.exp(lpsi)[:, None] * spec.s[None, :])   # k x m
        r = np.maximum(rss0 + (((1.0 - ff) ** 2) * c2.T).sum(axis=1), floor)
        e = ff.sum(axis=1)
        return n * r / (n - e) ** 2

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.copy(), hi.copy()
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = crit(x1), crit(x2)
    for _ in range(40):
        left = f1 < f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        x2n = np.where(left, x1, a + invphi * (b - a))
        x1n = np.where(left, b - invphi * (b - a), x2)
        f1n = np.where(left, crit(x1n), f2)
        f2n = np.where(left, f1, crit(x2n))
        x1, x2, f1, f2 = x1n, x2n, f1n, f2n
    lbest = (a + b) / 2.0
    fbest = crit(lbest)
    take_grid = best_grid <= fbest
    psi = np.where(take_grid, grid[idx], np.exp(lbest))
    return psi, boundary & take_grid


def select_psi_gcv(design, penalty, partial_residual):
    """Smoothing parameter minimising ``n RSS / (n - edf)^2``.

    Returns ``(psi, on_boundary)``.
    """
    spec = Spectrum(design, penalty)
    r = np.asarray(partial_residual, dtype=float).reshape(-1, 1)
    c = spec.P.T @ r
    rss0 = (r * r).sum(axis=0) - (c * c).sum(axis=0)
    psi, boundary = _gcv_search(spec, c, rss0, r.shape[0])
    return float(psi[0]), bool(boundary[0])


def gcv_score(design, penalty, y, psi) -> float:
    spec = Spectrum(design, penalty)
    r = np.asarray(y, dtype=float)
    c = spec.P.T @ r
    f = spec.shrink(psi)[0]
    rss = max(r @ r - c @ c + (((1.0 - f) * c) ** 2).sum(), RSS_FLOOR * (r @ r))
    n = r.shape[0]
    return float(n * rss / (n - f.sum()) ** 2)


class Backfitter:
    """Smooth and linear blocks built once from a dataset, fitted to many responses."""

    def __init__(self, data: Dataset, smooth_vars, linear_vars, dim: int = DEFAULT_DIM,
                 extra_linear=None, extra_names=()):
        smooth_vars, linear_vars = list(smooth_vars), list(linear_vars)
        if set(smooth_vars) & set(linear_vars):
            raise ValueError("smooth and linear variable sets overlap")
        self.demoted = []
        self.bases, self.spectra, self.penalties, self.designs = [], [], [], []
        for v in smooth_vars:
            x = data.column(v)
            try:
                basis, _ = build_cubic_basis(x, dim, v)
                z = basis.constraint()
                design = basis.raw_design(x) @ z
                pen = z.T @ penalty_matrix(basis) @ z
                spec = Spectrum(design, pen)
            except (TooFewDistinctValues, SingularSystem) as exc:
                warnings.warn(f"{v} demoted to a linear term: {exc}")
                self.demoted.append(v)
                continue
            self.bases.append(basis)
            self.spectra.append(spec)
            self.penalties.append(pen)
            self.designs.append(design)
        self.linear_names = list(linear_vars) + self.demoted + list(extra_names)
        if not self.bases and not self.linear_names:
            raise EmptyModel("no smooth and no linear terms")
        blocks = [np.ones((data.n, 1)), data.term_matrix(list(linear_vars) + self.demoted)]
        if extra_linear is not None:
            blocks.append(np.asarray(extra_linear, dtype=float).reshape(data.n, -1))
        self.L = np.column_stack(blocks)
        u, sv, vt = np.linalg.svd(self.L, full_matrices=False)
        keep = sv > sv[0] * 1e-10
        self.rank_deficient = not keep.all()
        self.U = u[:, keep]
        self.L_pinv = (vt[keep].T / sv[keep]) @ u[:, keep].T
        self.n = data.n

    def _joint(self):
        if not hasattr(self, "_gram"):
            D = np.column_stack([self.L] + self.designs)
            self._D = D
            self._gram = D.T @ D
        return self._D, self._gram

    def _solve_frozen(self, Y, psis):
        """Joint minimiser of the penalized objective for fixed smoothing parameters.

        This is the fixed point backfitting converges to.
        """
        D, G = self._joint()
        q = self.L.shape[1]
        rhs = D.T @ Y
        k = Y.shape[1]
        sizes = [s.m for s in self.spectra]
        A = np.repeat(G[None, :, :], k, axis=0)
        pos = q
        for j, m in enumerate(sizes):
            A[:, pos:pos + m, pos:pos + m] += psis[j][:, None, None] * self.penalties[j][None]
            pos += m
        if self.rank_deficient:
            sol = np.stack([np.linalg.lstsq(A[i], rhs[:, i], rcond=None)[0] for i in range(k)], axis=1)
        else:
            sol = np.linalg.solve(A, rhs.T[:, :, None])[:, :, 0].T
        thetas, pos = [], q
        for m in sizes:
            thetas.append(sol[pos:pos + m])
            pos += m
        return thetas

    def run(self, Y, psi=None, tol=TOL, max_cycles=MAX_CYCLES, gcv_cycles=GCV_CYCLES,
            accelerate=True) -> BackfitResult:
        """Backfit the columns of ``Y``.

        Smoothing parameters are re-selected by GCV during the first
        ``gcv_cycles`` sweeps and then frozen.  With ``accelerate`` the frozen
        problem is finished by a direct solve of the joint penalized normal
        equations (backfitting's fixed point), confirmed by one further sweep.
        """
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        n, k = Y.shape
        ns = len(self.spectra)
        sd = Y.std(axis=0)
        thresh = tol * np.where(sd > 0, sd, 1.0)

        fits = [np.zeros((n, k)) for _ in range(ns)]
        coefs = [np.zeros((s.m, k)) for s in self.spectra]
        psis = np.ones((ns, k))
        bnd = np.zeros((ns, k), dtype=bool)
        if psi is not None:
            psis[:] = np.asarray(psi, dtype=float).reshape(ns, -1)
        flin = self.U @ (self.U.T @ Y)
        total = flin.copy()
        objective = []

        def sweep(select):
            nonlocal total, flin
            delta = np.zeros(k)
            for j, spec in enumerate(self.spectra):
                r = Y - total + fits[j]
                c = spec.P.T @ r
                if select:
                    rss0 = (r * r).sum(axis=0) - (c * c).sum(axis=0)
                    psis[j], bnd[j] = _gcv_search(spec, c, rss0, n)
                a = c / (1.0 + psis[j][None, :] * spec.s[:, None])
                new = spec.P @ a
                delta = np.maximum(delta, np.abs(new - fits[j]).max(axis=0))
                total += new - fits[j]
                fits[j] = new
                coefs[j] = a
            r = Y - total + flin
            new = self.U @ (self.U.T @ r)
            delta = np.maximum(delta, np.abs(new - flin).max(axis=0))
            total += new - flin
            flin = new
            resid = Y - total
            obj = (resid * resid).sum(axis=0)
            for j, spec in enumerate(self.spectra):
                obj = obj + psis[j] * (spec.s[:, None] * coefs[j] ** 2).sum(axis=0)
            objective.append(obj)
            return delta

        converged = np.zeros(k, dtype=bool)
        cycle = 0
        select_cycles = 0 if psi is not None or ns == 0 else gcv_cycles
        while cycle < max_cycles:
            cycle += 1
            selecting = cycle <= select_cycles
            if not selecting and accelerate and ns > 0:
                thetas = self._solve_frozen(Y, psis)
                for j, spec in enumerate(self.spectra):
                    coefs[j] = spec.Tinv @ thetas[j]
                    fits[j] = spec.P @ coefs[j]
                total = sum(fits)
                flin = self.U @ (self.U.T @ (Y - total))
                total = total + flin
                accelerate = False
                cycle -= 1       # the direct solve is not itself a sweep
                continue
            delta = sweep(selecting)
            converged = delta < thresh
            if not selecting and converged.all():
                break
        lin_coef = self.L_pinv @ (Y - sum(fits) if fits else Y)
        edf = np.array([[float(f.sum()) for f in spec.shrink(psis[j])]
                        for j, spec in enumerate(self.spectra)]).reshape(ns, k)
        return BackfitResult(fits, [s.T @ a for s, a in zip(self.spectra, coefs)],
                             lin_coef, psis, edf, converged, cycle, objective, bnd)


def fit_gam(data: Dataset, smooth_vars, linear_vars=(), family: str = "gaussian",
            dim: int = DEFAULT_DIM, psi=None, tol: float = TOL,
            max_cycles: int = MAX_CYCLES, accelerate: bool = True) -> AdditiveModel:
    """Fit an additive model by backfitting with per-term GCV smoothing.

    ``family`` is ``gaussian`` or ``linear-probability``; both are fitted by
    penalized least squares, the latter on a 0/1 target.  Smooth variables
    with too few distinct values are demoted to linear terms.
    """
    if family not in ("gaussian", "linear-probability"):
        raise ValueError(f"unsupported family {family!r}")
    if data.y is None:
        raise ValueError("dataset has no target")
    bf = Backfitter(data, smooth_vars, linear_vars, dim)
    res = bf.run(data.y, psi=psi, tol=tol, max_cycles=max_cycles, accelerate=accelerate)
    if not res.converged[0]:
        raise NoConvergence(f"backfitting did not converge in {max_cycles} cycles",
                            trace=[float(o[0]) for o in res.objective])
    return _assemble(data, bf, res, 0, family)


def _assemble(data, bf: Backfitter, res: BackfitResult, col: int, family: str) -> AdditiveModel:
    smooths = []
    for j, basis in enumerate(bf.bases):
        theta = res.smooth_coef[j][:, col]
        smooths.append(SmoothTerm(
            basis=basis,
            coefficients=basis.constraint() @ theta,
            psi=float(res.psi[j, col]),
            edf=float(res.edf[j, col]),
            theta=theta,
            gram=bf.designs[j].T @ bf.designs[j],
            penalty=bf.penalties[j],
        ))
    lin = res.linear_coef[:, col]
    model = AdditiveModel(
        intercept=float(lin[0]),
        linear_terms={name: float(b) for name, b in zip(bf.linear_names, lin[1:])},
        smooths=smooths,
        family=family,
        residuals=np.zeros(data.n),
        columns=data.fingerprint(),
        n=data.n,
        n_cycles=res.n_cycles,
        objective_trace=[float(o[col]) for o in res.objective],
        demoted=list(bf.demoted),
    )
    model.residuals = data.y - predict(model, data)
    q = np.linalg.matrix_rank(bf.L) if bf.rank_deficient else bf.L.shape[1]
    model.edf_total = float(q + sum(s.edf for s in smooths))
    dof = max(data.n - model.edf_total, 1.0)
    model.scale = float(model.residuals @ model.residuals / dof)
    return model


def predict(model: AdditiveModel, data: Dataset) -> np.ndarray:
    needed = [s.variable for s in model.smooths]
    for name in model.linear_terms:
        needed.extend(name.split(":"))
    check_schema(data, [n.split("^")[0] for n in needed])
    out = np.full(data.n, model.intercept)
    for name, coef in model.linear_terms.items():
        out = out + coef * data.term(name)
    for s in model.smooths:
        out = out + s.evaluate(data.column(s.variable))
    return out


def smooth_curve(model: AdditiveModel, variable: str, grid):
    grid = np.asarray(grid, dtype=float)
    return grid, model.smooth(variable).evaluate(grid)


@dataclass
class SmoothSummaryRow:
    variable: str
    edf: float
    ref_df: int
    f_stat: float
    p_value: float


def wald_f(theta, gram, penalty, psi, scale, edf, resid_df):
    """Approximate Wald F for one penalized smooth (edf numerator df)."""
    quad = float(theta @ (gram + psi * penalty) @ theta) / scale
    if quad <= 0.0 or edf <= 0.0:
        return 0.0, 1.0
    f = quad / edf
    return f, float(stats.f.sf(f, edf, resid_df))


def smooth_summary(model: AdditiveModel) -> list:
    """Per-term edf, reference df, Wald F and p-value (approximate)."""
    rows = []
    resid_df = max(model.n - model.edf_total, 1.0)
    for s in model.smooths:
        f, p = wald_f(s.theta, s.gram, s.penalty, s.psi, model.scale, s.edf, resid_df)
        rows.append(SmoothSummaryRow(s.variable, s.edf, s.basis.dim - 1, f, p))
    return rows


def with_zero_smooth(model: AdditiveModel, variable: str) -> AdditiveModel:
    """Copy of ``model`` whose term for ``variable`` has all-zero coefficients."""
    smooths = [replace(s, coefficients=np.zeros_like(s.coefficients), theta=np.zeros_like(s.theta))
               if s.variable == variable else s for s in model.smooths]
    return replace(model, smooths=smooths)
