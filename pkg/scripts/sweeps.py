"""Acceptance sweeps with an on-disk cache.

Each sweep is cached in ``results/<name>-<key>.json`` where the key hashes
the package sources together with the sweep definition, so editing either
invalidates the entry.  Run this file to (re)build every entry:

    python scripts/sweeps.py            # all sweeps
    python scripts/sweeps.py boston     # one sweep
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
RESULTS = ROOT / "results"
DATA = ROOT / "data"

SEED = 20240601          # fixed seed shared by the CV sweeps


@dataclass
class SimSweep:
    setup: int
    models: list             # (name, tuning) pairs
    n_r: int = 200
    seed: int = 1
    kind: str = "simulation"


@dataclass
class CvSweep:
    data: str
    target: str
    models: list
    kinds: dict = field(default_factory=dict)
    family: str = "gaussian"
    k: int = 10
    seed: int = SEED
    mcs_alpha: float = 0.10
    mcs_B: int = 10_000
    kind: str = "cv"


SWEEPS = {
    "setup1": SimSweep(1, [("gama", {"alpha": 0.05, "dim": 20}), ("gama", {"alpha": 0.01, "dim": 20}),
                           ("gama*", {"alpha": 0.05, "dim": 20}), ("gamla", {"lambda": "1se", "dim": 20}),
                           ("ols-augmented", {})]),
    "setup1_dim6": SimSweep(1, [("gama", {"alpha": 0.05}), ("gama*", {"alpha": 0.05})], n_r=100),
    "setup1_ensembles": SimSweep(1, [("forest", {}), ("boosting", {}), ("ols-augmented", {})], n_r=100),
    "setup4": SimSweep(4, [("am", {"alpha": 0.01}), ("alasso", {"lambda": "1se"})]),
    "boston": CvSweep("boston.csv", "Medv",
                      [("ols", {}), ("gam", {}), ("gama", {"alpha": 0.05}), ("gamla", {"lambda": "min"}),
                       ("forest", {}), ("boosting", {})], kinds={"Rad": "excluded"}),
    "credit": CvSweep("credit_card.csv", "Card", [("ols", {}), ("gam", {}), ("gama", {"alpha": 0.01})],
                      family="linear-probability"),
}


def source_hash() -> str:
    h = hashlib.sha256()
    for p in sorted((ROOT / "src" / "plam").glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def cache_path(name: str) -> Path:
    sweep = SWEEPS[name]
    key = hashlib.sha256((source_hash() + json.dumps(asdict(sweep), sort_keys=True)).encode())
    return RESULTS / f"{name}-{key.hexdigest()[:16]}.json"


def _specs(models):
    from plam.models import ModelSpec
    return [ModelSpec.make(n, **t) for n, t in models]


def run_sim(sweep: SimSweep) -> dict:
    from plam.simulation import DgpConfig, run_monte_carlo
    cfg = DgpConfig(setup=sweep.setup, seed=sweep.seed)
    rep = run_monte_carlo(cfg, _specs(sweep.models), sweep.n_r, sweep.seed,
                          progress=lambda i, n: print(f"  replication {i}/{n}", end="\r", flush=True))
    print()
    out = rep.to_dict()
    out["table"] = rep.table()
    return out


def run_cv(sweep: CvSweep) -> dict:
    from plam.data import ingest_csv
    from plam.evaluation import auc, auc_test, kfold_cv, mcs
    from plam.models import fit_spec
    from plam.selection import fold_ids

    data = ingest_csv(DATA / sweep.data, sweep.target, sweep.kinds or None)
    folds = fold_ids(data.n, sweep.k, sweep.seed)
    preds, secs = {}, {}
    for spec in _specs(sweep.models):
        t0 = time.time()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cv = kfold_cv(data, lambda tr, s=spec: fit_spec(s, tr, seed=sweep.seed, family=sweep.family),
                          sweep.k, sweep.seed, spec.label, folds)
        preds[spec.name] = cv.predictions
        secs[spec.name] = time.time() - t0
        print(f"  {spec.label}: {secs[spec.name]:.1f}s", flush=True)
    names = list(preds)
    out = {"models": {}, "seconds": secs}
    if sweep.family == "linear-probability":
        for n in names:
            out["models"][n] = {"auc": auc(preds[n], data.y)}
        out["auc_tests"] = {f"{a} vs {b}": auc_test(preds[a], preds[b], data.y).as_dict()
                            for i, a in enumerate(names) for b in names[i + 1:]}
    else:
        L = np.column_stack([(preds[n] - data.y) ** 2 for n in names])
        res = mcs(L, sweep.mcs_alpha, sweep.mcs_B, sweep.seed, names)
        for j, n in enumerate(names):
            out["models"][n] = {"mse": float(L[:, j].mean()), "mcs_p": res.p_values[n]}
        out["mcs"] = res.as_dict()
    return out


def load_or_run(name: str, force: bool = False) -> dict:
    path = cache_path(name)
    if path.exists() and not force:
        return json.loads(path.read_text())
    sweep = SWEEPS[name]
    print(f"running sweep {name} -> {path.name}", flush=True)
    t0 = time.time()
    result = run_sim(sweep) if sweep.kind == "simulation" else run_cv(sweep)
    result["sweep"] = asdict(sweep)
    result["wall_seconds"] = time.time() - t0
    RESULTS.mkdir(exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(result, indent=1, default=str))
    tmp.replace(path)
    return result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", default=list(SWEEPS), help=f"subset of {list(SWEEPS)}")
    ap.add_argument("--force", action="store_true", help="ignore cached results")
    args = ap.parse_args(argv)
    for name in args.names:
        res = load_or_run(name, args.force)
        print(res.get("table") or json.dumps(res["models"], indent=1))
        print(f"[{name}] {res['wall_seconds']:.0f}s\n", flush=True)


if __name__ == "__main__":
    sys.path.insert(0, str(ROOT / "src"))
    main()
