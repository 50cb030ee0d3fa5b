"""Model registry: names and tunings to fit functions, plus the model JSON format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import baselines as bl
from .basis import DEFAULT_DIM, SplineBasis
from .data import Dataset
from .errors import ConfigError, SchemaMismatch
from .gam import AdditiveModel, SmoothTerm, fit_gam
from .gamla import PartialLinearModel, fit_partial_linear, model_vars
from .selection import fit_adaptive_lasso, gets_select, lasso_select

SCHEMA_VERSION = 1

PARTIAL_LINEAR = {
    "gamla": ("lasso", False), "gamla*": ("lasso", True),
    "gamla-alasso": ("adaptive-lasso", False), "gamla-alasso*": ("adaptive-lasso", True),
    "gama": ("gets", False), "gama*": ("gets", True),
}
MODEL_NAMES = ("gam", *PARTIAL_LINEAR, "ols", "ols-augmented", "lasso", "alasso", "am",
               "tree", "forest", "boosting", "pltr")

TUNING_KEYS = {
    "gam": {"dim"},
    "ols": set(), "ols-augmented": {"powers"},
    "lasso": {"lambda", "powers"}, "alasso": {"lambda", "powers", "nu"}, "am": {"alpha", "powers"},
    "tree": {"max_depth", "min_leaf"},
    "forest": {"B", "mtry", "min_leaf"},
    "boosting": {"B", "learning_rate", "max_depth", "min_leaf", "validation_fraction"},
    "pltr": {"deep_leaf", "min_leaf"},
}
for _n in PARTIAL_LINEAR:
    TUNING_KEYS[_n] = {"lambda", "alpha", "nu", "dim", "k"}

DEFAULT_TUNING = {
    "gamla": {"lambda": "min"}, "gamla*": {"lambda": "min"},
    "gamla-alasso": {"lambda": "min"}, "gamla-alasso*": {"lambda": "min"},
    "gama": {"alpha": 0.05}, "gama*": {"alpha": 0.05},
    "lasso": {"lambda": "min"}, "alasso": {"lambda": "min"}, "am": {"alpha": 0.05},
}


@dataclass(frozen=True)
class ModelSpec:
    name: str
    tuning: tuple = ()       # sorted (key, value) pairs, hashable

    @classmethod
    def make(cls, name: str, **tuning) -> "ModelSpec":
        if name not in MODEL_NAMES:
            raise ConfigError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
        bad = set(tuning) - TUNING_KEYS[name]
        if bad:
            raise ConfigError(f"tuning keys {sorted(bad)} not valid for {name}")
        full = dict(DEFAULT_TUNING.get(name, {}))
        full.update(tuning)
        if "lambda" in full and full["lambda"] not in ("min", "1se"):
            raise ConfigError("lambda must be 'min' or '1se'")
        if "alpha" in full:
            full["alpha"] = float(full["alpha"])
            if not 0 < full["alpha"] < 1:
                raise ConfigError("alpha must lie in (0, 1)")
        return cls(name, tuple(sorted(full.items())))

    @property
    def params(self) -> dict:
        return dict(self.tuning)

    @property
    def label(self) -> str:
        t = ",".join(f"{k}={v}" for k, v in self.tuning)
        return f"{self.name}({t})" if t else self.name

    @property
    def tuning_label(self) -> str:
        return ",".join(f"{k}={v}" for k, v in self.tuning)


@dataclass(eq=False)
class Fitted:
    """A fitted model of any kind with a uniform ``predict`` and metadata."""
    name: str
    model: object
    columns: list
    interactions: list | None = None      # retained interaction names (selectors only)
    config: dict = field(default_factory=dict)

    def predict(self, data: Dataset) -> np.ndarray:
        missing = [c for c in self.columns if c not in data.columns]
        if missing:
            raise SchemaMismatch(f"new data lacks columns {missing}")
        return self.model.predict(data)


def _linear_from(names, coef, icpt, family):
    return bl.LinearModel(float(icpt), {n: float(b) for n, b in zip(names, coef)}, [], family)


def _interactions_of(names):
    return [n for n in names if ":" in n]


def fit_spec(spec: ModelSpec, data: Dataset, seed=0, family: str = "gaussian", dr=None) -> Fitted:
    """Fit ``spec`` on ``data``.  ``dr`` may carry precomputed double residuals."""
    name, t = spec.name, spec.params
    cols = list(data.columns)
    cfg = {"model": name, "tuning": t, "seed": seed, "family": family}
    classification = family == "linear-probability"

    if name == "gam":
        sm, lin = model_vars(data)
        m = fit_gam(data, sm, lin, family=family, dim=int(t.get("dim", DEFAULT_DIM)))
        return Fitted(name, m, cols, None, cfg)

    if name in PARTIAL_LINEAR:
        engine, naive = PARTIAL_LINEAR[name]
        sel_t = {k: v for k, v in t.items() if k in ("lambda", "alpha", "nu")}
        m = fit_partial_linear(data, engine, sel_t, naive, seed, k=int(t.get("k", 10)),
                               dim=int(t.get("dim", DEFAULT_DIM)), family=family, dr=dr)
        return Fitted(name, m, cols, list(m.selected), cfg)

    if name == "ols":
        return Fitted(name, bl.fit_ols(data, family=family), cols, None, cfg)

    if name in ("ols-augmented", "lasso", "alasso", "am"):
        design = bl.augment(data, int(t.get("powers", 3)), True)
        if name == "ols-augmented":
            return Fitted(name, bl.fit_ols(data, design.names, family=family), cols, None, cfg)
        X = design.matrix(data)
        if name == "am":
            res = gets_select(X, data.y, t["alpha"], design.names)
        elif name == "lasso":
            res = lasso_select(X, data.y, design.names, t["lambda"], 10, seed)
        else:
            res = fit_adaptive_lasso(X, data.y, design.names, t.get("nu", 1.0), t["lambda"], 10, seed)
        m = _linear_from(res.retained, res.coefficients, res.intercept, family)
        cfg["selection"] = res.as_dict()
        return Fitted(name, m, cols, _interactions_of(res.retained), cfg)

    task = "classification" if classification else "regression"
    if name == "tree":
        m = bl.fit_tree(data, task, t.get("max_depth"), int(t.get("min_leaf", 5)))
    elif name == "forest":
        m = bl.fit_random_forest(data, int(t.get("B", 500)), t.get("mtry"), int(t.get("min_leaf", 5)),
                                 seed, task)
    elif name == "boosting":
        m = bl.fit_gradient_boosting(data, int(t.get("B", 500)), float(t.get("learning_rate", 0.1)),
                                     int(t.get("max_depth", 3)), "squared", seed,
                                     int(t.get("min_leaf", 1)),
                                     float(t.get("validation_fraction", 0.2)))
    elif name == "pltr":
        m = bl.fit_pltr(data, seed, t.get("min_leaf"), t.get("deep_leaf", "left"))
    else:  # pragma: no cover - guarded by ModelSpec.make
        raise ConfigError(name)
    return Fitted(name, m, cols, None, cfg)


# ---------------------------------------------------------------- JSON format

def _smooth_dict(s: SmoothTerm) -> dict:
    return {
        "variable": s.variable,
        "dim": s.basis.dim,
        "knots": s.basis.knots.tolist(),
        "centering": s.basis.centering.tolist(),
        "coefficients": s.coefficients.tolist(),
        "psi": s.psi,
        "edf": s.edf,
    }


def _additive_from(d: dict) -> AdditiveModel:
    smooths = []
    for s in d["smooths"]:
        basis = SplineBasis.from_dict(s)
        smooths.append(SmoothTerm(basis, np.asarray(s["coefficients"], dtype=float),
                                  float(s["psi"]), float(s["edf"])))
    return AdditiveModel(float(d["intercept"]), dict(d["linear_terms"]), smooths,
                         d.get("family", "gaussian"), np.zeros(0), list(d["columns"]))


def _tree_payload(m):
    if isinstance(m, bl.TreeModel):
        return {"kind": "tree", "task": m.task, "trees": [m.to_dict()], "weights": [1.0], "init": 0.0,
                "loss": "squared"}
    if isinstance(m, bl.EnsembleModel):
        return {"kind": m.kind, "task": m.task, "trees": [t.to_dict() for t in m.trees],
                "weights": m.weights.tolist(), "init": m.init, "loss": m.loss, "params": m.params}
    if isinstance(m, bl.PltrModel):
        return {"kind": "pltr",
                "univariate": [r.conditions for r in m.univariate],
                "bivariate": [r.conditions for r in m.bivariate],
                "coefficients": m.coefficients.tolist(), "intercept": m.intercept,
                "columns": m.columns, "selection": m.selection}
    return None


def to_json_dict(f: Fitted) -> dict:
    m = f.model
    out = {"schema_version": SCHEMA_VERSION, "variant": f.name, "config": f.config,
           "columns": list(f.columns), "intercept": None, "linear_terms": {}, "smooths": []}
    fit = m.final_fit if isinstance(m, PartialLinearModel) else m
    if isinstance(fit, AdditiveModel):
        out["intercept"] = fit.intercept
        out["linear_terms"] = dict(fit.linear_terms)
        out["smooths"] = [_smooth_dict(s) for s in fit.smooths]
        out["family"] = fit.family
    elif isinstance(fit, bl.LinearModel):
        out["intercept"] = fit.intercept
        out["linear_terms"] = dict(fit.coefficients)
        out["family"] = fit.family
    else:
        out["trees"] = _tree_payload(fit)
    if isinstance(m, PartialLinearModel):
        out["selection"] = m.selection.as_dict()
        out["selection"]["catalog"] = m.interaction_catalog
        out["training_quantiles"] = m.quantiles
    elif "selection" in f.config:
        out["selection"] = f.config["selection"]
    if f.interactions is not None:
        out["interactions"] = list(f.interactions)
    return out


@dataclass(eq=False)
class LoadedPartialLinear:
    """Just enough of a PartialLinearModel for prediction and marginal effects."""
    final_fit: AdditiveModel
    quantiles: dict

    def predict(self, data):
        return self.final_fit.predict(data)


def from_json_dict(d: dict) -> Fitted:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported model schema version {d.get('schema_version')!r}")
    cols = list(d["columns"])
    name = d["variant"]
    if d.get("trees"):
        tp = d["trees"]
        if tp["kind"] == "pltr":
            rules = lambda rs: [bl.LeafRule([tuple(c) for c in r]) for r in rs]
            m = bl.PltrModel(tp["columns"], rules(tp["univariate"]), rules(tp["bivariate"]),
                             np.asarray(tp["coefficients"], dtype=float), float(tp["intercept"]),
                             tp.get("selection", {}))
        else:
            trees = [bl.TreeModel.from_dict(t, cols, tp["task"]) for t in tp["trees"]]
            if tp["kind"] == "tree":
                m = trees[0]
            else:
                m = bl.EnsembleModel(tp["kind"], trees, np.asarray(tp["weights"], dtype=float), cols,
                                     tp["task"], float(tp["init"]), tp["loss"], tp.get("params", {}))
    elif d.get("smooths") or name == "gam" or name in PARTIAL_LINEAR:
        fit = _additive_from(d)
        m = LoadedPartialLinear(fit, d.get("training_quantiles", {})) if name in PARTIAL_LINEAR else fit
    else:
        m = bl.LinearModel(float(d["intercept"]), dict(d["linear_terms"]), [], d.get("family", "gaussian"))
    return Fitted(name, m, cols, d.get("interactions"), d.get("config", {}))


def dumps(f: Fitted) -> str:
    return json.dumps(to_json_dict(f), indent=1)


def loads(text: str) -> Fitted:
    return from_json_dict(json.loads(text))
