"""Monte Carlo data generation, coefficient calibration and replication sweeps."""
from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy import stats

from .data import Dataset
from .errors import SingularGram

SETUPS = {
    1: ("nonlinear", "correlated"),
    2: ("nonlinear", "uncorrelated"),
    3: ("linear", "correlated"),
    4: ("linear", "uncorrelated"),
}

# -g_j(x)/x as x -> 0 (left limit for the kinked g_2)
_RATIO_LIMIT = {1: -5.0, 2: -5.0, 3: 0.0, 4: -1.0, 5: -10.0}


@dataclass(frozen=True)
class DgpConfig:
    setup: int = 1
    p: int = 10
    q: int = 5
    n_in: int = 1000
    n_out: int = 1000
    noise_sd: float = 1.0
    u_var: float = 0.4
    xi: float = 6.0
    seed: int = 0
    calibration_rows: int = 1_000_000

    def __post_init__(self):
        if self.setup not in SETUPS:
            raise ValueError(f"setup must be one of {sorted(SETUPS)}")
        if not (0 < self.q <= self.p) or self.n_in <= 0 or self.n_out <= 0:
            raise ValueError("need 0 < q <= p and positive sample sizes")
        if self.setup in (1, 3) and 2 * self.q > self.p:
            raise ValueError("correlated setups need p >= 2q")

    @property
    def nonlinear(self) -> bool:
        return SETUPS[self.setup][0] == "nonlinear"

    @property
    def correlated(self) -> bool:
        return SETUPS[self.setup][1] == "correlated"


@dataclass
class DgpTruth:
    relevant: list            # pairs (j, k), 1-based column indices
    gamma: dict               # pair -> coefficient
    linear_gamma: dict        # j -> coefficient (linear setups only)
    catalog: list             # all pairs in lexicographic order

    @property
    def relevant_names(self) -> set:
        return {f"x{j}:x{k}" for j, k in self.relevant}


def eval_g(j: int, x):
    """The five nonlinear generating functions; zero for ``j > 5``."""
    x = np.asarray(x, dtype=float)
    if j == 1:
        return np.sin(5.0 * x)
    if j == 2:
        return 5.0 * x - 5.0 * x * (x > 0)
    if j == 3:
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = stats.lognorm.pdf(x[pos], s=0.5, scale=1.0)
        return out
    if j == 4:
        return np.exp(x)
    if j == 5:
        return np.arctan(10.0 * x)
    if j < 1:
        raise ValueError("j is 1-based")
    return np.zeros_like(x)


def _ratio(j: int, x):
    small = np.abs(x) < 1e-12
    safe = np.where(small, 1.0, x)
    out = -eval_g(j, safe) / safe
    return np.where(small, _RATIO_LIMIT.get(j, 0.0), out)


def pair_catalog(p: int) -> list:
    return list(combinations(range(1, p + 1), 2))


def _covariates(config: DgpConfig, rng, n: int) -> np.ndarray:
    X = np.empty((n, config.p))
    if config.correlated:
        X[:, : config.q] = rng.standard_normal((n, config.q))
        rest = config.p - config.q
        u = rng.normal(0.0, np.sqrt(config.u_var), size=(n, rest))
        for j in range(config.q + 1, config.p + 1):
            X[:, j - 1] = _ratio(j - config.q, X[:, j - config.q - 1]) + u[:, j - config.q - 1]
    else:
        X[:] = rng.standard_normal((n, config.p))
    return X


def _smooth_part(config: DgpConfig, X, linear_gamma) -> np.ndarray:
    """Columns of the additive signal entering y (one per relevant function)."""
    cols = []
    for j in range(1, config.q + 1):
        if config.nonlinear:
            cols.append(eval_g(j, X[:, j - 1]))
        else:
            cols.append(X[:, j - 1])
    return np.column_stack(cols)


def _interactions(X, catalog) -> np.ndarray:
    return np.column_stack([X[:, j - 1] * X[:, k - 1] for j, k in catalog])


def relevant_pairs(config: DgpConfig) -> list:
    return [(j, j + config.q) for j in range(1, config.q + 1) if j + config.q <= config.p]


@lru_cache(maxsize=16)
def _calibrate_cached(config: DgpConfig):
    catalog = pair_catalog(config.p)
    rng = np.random.default_rng([config.seed, 0xCA11B])
    n_blocks = max(config.calibration_rows // config.n_in, 1)
    gram = None
    chunk = max(1, 100_000 // config.n_in)
    done = 0
    while done < n_blocks:
        b = min(chunk, n_blocks - done)
        X = _covariates(config, rng, b * config.n_in)
        W = np.column_stack([_interactions(X, catalog), _smooth_part(config, X, None)])
        g = W.T @ W
        gram = g if gram is None else gram + g
        done += b
    gram = gram / n_blocks        # mean of the per-block Gram matrices
    if np.linalg.cond(gram) > 1e10:
        raise SingularGram("estimated E(W'W) is numerically singular")
    inv_diag = np.diag(np.linalg.inv(gram))
    rel = relevant_pairs(config)
    gamma = {pair: config.xi * float(np.sqrt(inv_diag[catalog.index(pair)])) for pair in rel}
    linear_gamma = {}
    if not config.nonlinear:
        s = len(catalog)
        linear_gamma = {j: config.xi * float(np.sqrt(inv_diag[s + j - 1]))
                        for j in range(1, config.q + 1)}
    return gamma, linear_gamma


def calibrate_gamma(config: DgpConfig) -> dict:
    """Interaction coefficients giving each relevant pair an expected |t| of ``xi``.

    ``gamma = xi * sqrt(diag(E[W'W]^{-1}))`` with ``E[W'W]`` estimated as
    the mean Gram matrix of ``n_in``-row blocks drawn from a large
    calibration sample.
    """
    gamma, _ = _calibrate_cached(replace(config, xi=1.0))
    return {k: config.xi * v for k, v in gamma.items()}


def calibrate_linear_gamma(config: DgpConfig) -> dict:
    _, lin = _calibrate_cached(replace(config, xi=1.0))
    return {k: config.xi * v for k, v in lin.items()}


def make_truth(config: DgpConfig) -> DgpTruth:
    return DgpTruth(
        relevant=relevant_pairs(config),
        gamma=calibrate_gamma(config),
        linear_gamma=calibrate_linear_gamma(config) if not config.nonlinear else {},
        catalog=pair_catalog(config.p),
    )


def conditional_mean(config: DgpConfig, truth: DgpTruth, X) -> np.ndarray:
    mean = np.zeros(X.shape[0])
    for (j, k), g in truth.gamma.items():
        mean += g * X[:, j - 1] * X[:, k - 1]
    for j in range(1, config.q + 1):
        if config.nonlinear:
            mean += eval_g(j, X[:, j - 1])
        else:
            mean += truth.linear_gamma[j] * X[:, j - 1]
    return mean


def gen_dgp(config: DgpConfig, replication_index: int = 0, truth: DgpTruth | None = None):
    """Draw one replication: ``(train, test, truth)``; deterministic per index."""
    truth = truth or make_truth(config)
    rng = np.random.default_rng([config.seed, replication_index])
    n = config.n_in + config.n_out
    X = _covariates(config, rng, n)
    y = conditional_mean(config, truth, X) + rng.normal(0.0, config.noise_sd, size=n)
    cols = tuple(f"x{j}" for j in range(1, config.p + 1))
    kinds = {c: "continuous" for c in cols}
    train = Dataset(cols, X[: config.n_in], y[: config.n_in], "y", kinds, {"replication": replication_index})
    test = Dataset(cols, X[config.n_in:], y[config.n_in:], "y", kinds, {"replication": replication_index})
    return train, test, truth


@dataclass
class MonteCarloRow:
    model: str
    tuning: str
    potency: float | None
    gauge: float | None
    mse: float
    replications: int
    failures: int
    mse_median: float = float("nan")


@dataclass
class MonteCarloReport:
    rows: list
    config: dict
    n_r: int
    seed: int
    records: list = field(default_factory=list)    # per (replication, model) outcomes
    seconds: float = 0.0

    def row(self, label: str) -> MonteCarloRow:
        for r in self.rows:
            if f"{r.model}({r.tuning})" == label or (r.model == label and not r.tuning):
                return r
        raise KeyError(label)

    def find(self, model: str, **tuning) -> MonteCarloRow:
        want = ",".join(f"{k}={v}" for k, v in sorted(tuning.items()))
        for r in self.rows:
            if r.model == model and (not tuning or r.tuning == want):
                return r
        raise KeyError(f"{model} {want}")

    def table(self) -> str:
        def fmt(v):
            if v is None or (isinstance(v, float) and np.isnan(v)):
                return "-"
            return f"{v:.3f}" if abs(v) < 1e5 else f"{v:.2e}"
        head = (f"{'Model':<16}{'Tuning':<22}{'Potency':>9}{'Gauge':>9}{'MSE':>11}"
                f"{'median':>9}{'Fail':>6}")
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r.model:<16}{r.tuning:<22}{fmt(r.potency):>9}{fmt(r.gauge):>9}"
                         f"{fmt(r.mse):>11}{fmt(r.mse_median):>9}{r.failures:>6}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"config": self.config, "n_r": self.n_r, "seed": self.seed, "seconds": self.seconds,
                "rows": [asdict(r) for r in self.rows], "records": self.records}

    def to_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "tuning", "potency", "gauge", "mse", "mse_median", "replications", "failures"])
            for r in self.rows:
                w.writerow([r.model, r.tuning, r.potency, r.gauge, r.mse, r.mse_median,
                            r.replications, r.failures])


def _one_replication(config: DgpConfig, specs, rep: int, truth: DgpTruth):
    # imported here: models depends on gamla, which depends on gam; keeps import light
    from .basis import DEFAULT_DIM
    from .evaluation import gauge, mse, potency
    from .gamla import double_residuals
    from .models import PARTIAL_LINEAR, fit_spec

    train, test, _ = gen_dgp(config, rep, truth)
    relevant = truth.relevant_names
    S = len(truth.catalog)
    shared = {}        # double residuals per basis dimension, shared across specs
    out = []
    for spec in specs:
        rec = {"replication": rep, "model": spec.name, "tuning": spec.tuning_label}
        try:
            dr = None
            if spec.name in PARTIAL_LINEAR:
                dim = int(spec.params.get("dim", DEFAULT_DIM))
                if dim not in shared:
                    try:
                        with warnings.catch_warnings():
                            warnings.simplefilter("ignore")
                            shared[dim] = double_residuals(train, dim=dim)
                    except Exception as exc:
                        shared[dim] = exc
                dr = shared[dim]
                if isinstance(dr, Exception):
                    raise dr
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fitted = fit_spec(spec, train, seed=rep, dr=dr)
            rec["mse"] = mse(fitted.predict(test), test.y)
            if fitted.interactions is not None:
                sel = fitted.interactions
                rec["potency"] = potency(sel, relevant)
                rec["gauge"] = gauge(sel, relevant, S)
                rec["selected"] = list(sel)
        except Exception as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        out.append(rec)
    return out


def _worker(args):
    config, specs, rep, truth = args
    return _one_replication(config, specs, rep, truth)


def _workers() -> int:
    import os
    try:
        return max(1, int(os.environ.get("PLAM_THREADS", "1")))
    except ValueError:
        return 1


def run_monte_carlo(config: DgpConfig, specs, n_r: int, seed: int | None = None,
                    progress=None) -> MonteCarloReport:
    """Fit every spec on ``n_r`` replications and average potency, gauge and MSE.

    Replication ``r`` draws its data from ``(seed, r)``, so results do not
    depend on execution order.  Failed fits are counted and left out of that
    model's averages.  ``PLAM_THREADS`` > 1 spreads replications over processes.
    """
    if seed is not None:
        config = replace(config, seed=seed)
    specs = list(specs)
    truth = make_truth(config)
    t0 = time.time()
    jobs = [(config, specs, r, truth) for r in range(n_r)]
    nw = _workers()
    if nw > 1 and n_r > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(nw) as ex:
            results = list(ex.map(_worker, jobs))
    else:
        results = []
        for j in jobs:
            results.append(_worker(j))
            if progress:
                progress(len(results), n_r)
    records = [rec for rep in results for rec in rep]
    rows = []
    for i, spec in enumerate(specs):
        recs = [rep[i] for rep in results]
        ok = [r for r in recs if "error" not in r]
        pot = [r["potency"] for r in ok if "potency" in r]
        gau = [r["gauge"] for r in ok if "gauge" in r]
        m = [r["mse"] for r in ok]
        rows.append(MonteCarloRow(
            spec.name, spec.tuning_label,
            float(np.mean(pot)) if pot else None,
            float(np.mean(gau)) if gau else None,
            float(np.mean(m)) if m else float("nan"),
            len(ok), len(recs) - len(ok),
            float(np.median(m)) if m else float("nan"),
        ))
    cfg = asdict(config)
    cfg["specs"] = [s.label for s in specs]
    return MonteCarloReport(rows, cfg, n_r, config.seed, records, time.time() - t0)
