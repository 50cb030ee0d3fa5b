"""Command-line entry point: ``plam fit | evaluate | simulate | export-effects``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 fitting error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .data import Dataset, ingest_csv
from .errors import ConfigError, DataError, PlamError, UnknownVariable
from .evaluation import auc, auc_test, kfold_cv, mcs
from .gam import AdditiveModel, smooth_summary
from .gamla import DEFAULT_CONTEXT, PartialLinearModel, marginal_effects
from .models import MODEL_NAMES, PARTIAL_LINEAR, LoadedPartialLinear, ModelSpec, dumps, fit_spec, loads
from .selection import fold_ids
from .simulation import DgpConfig, run_monte_carlo

log = logging.getLogger("plam")

EXIT_CONFIG, EXIT_DATA, EXIT_FIT = 2, 3, 4
FAMILIES = ("gaussian", "linear-probability")


# ---------------------------------------------------------------- helpers

def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows, config: dict | None = None) -> str:
    """CSV body; the resolved config goes in a leading ``#`` comment line."""
    buf = io.StringIO()
    if config is not None:
        buf.write("# config: " + json.dumps(config, sort_keys=True, default=str) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _scalar(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def parse_pairs(text: str | None, what: str) -> dict:
    """``"a=1,b=min"`` -> ``{"a": 1, "b": "min"}``."""
    out = {}
    if not text:
        return out
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"{what} entry {part!r} is not key=value")
        k, v = part.split("=", 1)
        out[k.strip()] = _scalar(v.strip())
    return out


_SPEC_RE = re.compile(r"^\s*([\w*\-]+)\s*(?:\((.*)\))?\s*$")


def parse_spec(text: str, default_tuning: dict | None = None) -> ModelSpec:
    """``gama`` or ``gama(alpha=0.01)``; inline tuning overrides ``default_tuning``."""
    m = _SPEC_RE.match(text)
    if not m:
        raise ConfigError(f"cannot parse model {text!r}")
    name = m.group(1)
    tuning = dict(default_tuning or {})
    tuning.update(parse_pairs(m.group(2), "tuning"))
    return ModelSpec.make(name, **tuning)


def split_models(text: str) -> list:
    """Split a model list on commas outside parentheses."""
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur)
    return [s.strip() for s in out if s.strip()]


def load_data(args) -> Dataset:
    if not args.data:
        raise ConfigError("--data is required")
    kinds = parse_pairs(args.kinds, "--kinds")
    bad = {k: v for k, v in kinds.items() if v not in ("continuous", "binary", "excluded")}
    if bad:
        raise ConfigError(f"invalid kinds {bad}; use continuous, binary or excluded")
    return ingest_csv(args.data, args.target, kinds or None)


def resolve_family(args, data: Dataset) -> str:
    if args.family:
        if args.family not in FAMILIES:
            raise ConfigError(f"--family must be one of {FAMILIES}")
        return args.family
    return "linear-probability" if np.unique(data.y).size == 2 else "gaussian"


def base_config(args, **extra) -> dict:
    cfg = {"command": args.command, "data": args.data, "target": getattr(args, "target", None),
           "kinds": parse_pairs(getattr(args, "kinds", None), "--kinds"),
           "k": getattr(args, "k", None), "seed": args.seed}
    cfg.update(extra)
    return cfg


# ---------------------------------------------------------------- commands

def cmd_fit(args) -> int:
    data = load_data(args)
    family = resolve_family(args, data)
    spec = parse_spec(args.model, parse_pairs(args.tuning, "--tuning"))
    fitted = fit_spec(spec, data, seed=args.seed, family=family)
    fitted.config.update(base_config(args, model=spec.label, family=family,
                                     provenance=data.provenance))
    out = args.out or "model.json"
    atomic_write(out, dumps(fitted) + "\n")

    m = fitted.model
    fit = m.final_fit if isinstance(m, PartialLinearModel) else m
    print(f"model: {spec.label}  family: {family}  n={data.n}")
    if fitted.interactions is not None:
        print(f"number of interactions: {len(fitted.interactions)}")
        if fitted.interactions:
            print("  " + ", ".join(fitted.interactions))
    if isinstance(m, PartialLinearModel):
        print(f"tuning: {json.dumps(m.selection.tuning, default=str)}")
    elif "selection" in fitted.config:
        print(f"tuning: {json.dumps(fitted.config['selection'].get('tuning'), default=str)}")
    if isinstance(fit, AdditiveModel) and fit.smooths:
        print(f"{'smooth':<14}{'edf':>8}{'ref.df':>8}{'F':>10}{'p':>12}")
        for r in smooth_summary(fit):
            print(f"{r.variable:<14}{r.edf:>8.3f}{r.ref_df:>8d}{r.f_stat:>10.3f}{r.p_value:>12.3g}")
    print(f"wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    data = load_data(args)
    family = resolve_family(args, data)
    default = parse_pairs(args.tuning, "--tuning")
    specs = [parse_spec(s, {k: v for k, v in default.items()
                            if k in _tuning_keys(s)}) for s in split_models(args.model)]
    if len(specs) < 1:
        raise ConfigError("--model needs at least one model")
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ConfigError("duplicate models in --model")
    folds = fold_ids(data.n, args.k, args.seed)
    # PLTR (and AUC) only make sense for a 0/1 target
    classification = family == "linear-probability"
    preds = {}
    for spec in specs:
        log.info("cross-validating %s", spec.label)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cv = kfold_cv(data, lambda tr, s=spec: fit_spec(s, tr, seed=args.seed, family=family),
                          args.k, args.seed, spec.label, folds)
        preds[spec.label] = cv.predictions
    config = base_config(args, models=labels, family=family, provenance=data.provenance,
                         mcs_alpha=args.mcs_alpha, mcs_B=args.mcs_b)
    report = {"config": config, "folds": folds.tolist(), "models": {}}
    if classification:
        for lab in labels:
            report["models"][lab] = {"auc": auc(preds[lab], data.y)}
        pairs = {}
        for i, a in enumerate(labels):
            for b in labels[i + 1:]:
                pairs[f"{a} vs {b}"] = auc_test(preds[a], preds[b], data.y).as_dict()
        report["auc_tests"] = pairs
    else:
        losses = np.column_stack([(preds[lab] - data.y) ** 2 for lab in labels])
        for j, lab in enumerate(labels):
            report["models"][lab] = {"mse": float(losses[:, j].mean())}
        if len(labels) >= 2:
            res = mcs(losses, args.mcs_alpha, args.mcs_b, args.seed, labels)
            report["mcs"] = res.as_dict()
            for lab in labels:
                report["models"][lab]["mcs_p"] = res.p_values[lab]
                report["models"][lab]["in_mcs"] = lab in res.surviving
    out = args.out or "evaluation.json"
    atomic_write(out, json.dumps(report, indent=1, default=str) + "\n")
    pred_path = Path(out).with_suffix(".predictions.csv")
    rows = [[i, int(folds[i]), float(data.y[i])] + [float(preds[lab][i]) for lab in labels]
            for i in range(data.n)]
    atomic_write(pred_path, csv_text(["row", "fold", "y", *labels], rows, config))

    metric = "auc" if classification else "mse"
    head = f"{'Model':<30}{metric.upper():>10}" + ("" if classification else f"{'MCS p':>10}")
    print(head)
    for lab in labels:
        r = report["models"][lab]
        line = f"{lab:<30}{r[metric]:>10.4f}"
        if "mcs_p" in r:
            line += f"{r['mcs_p']:>10.3f}{' *' if r['in_mcs'] else ''}"
        print(line)
    if classification and len(labels) >= 2:
        print("\npairwise AUC test p-values")
        w = max(len(s) for s in labels) + 2
        print(" " * w + "".join(f"{s[:12]:>14}" for s in labels))
        for a in labels:
            cells = []
            for b in labels:
                if a == b:
                    cells.append(f"{'-':>14}")
                    continue
                key = f"{a} vs {b}" if f"{a} vs {b}" in report["auc_tests"] else f"{b} vs {a}"
                cells.append(f"{report['auc_tests'][key]['p_value']:>14.3g}")
            print(f"{a:<{w}}" + "".join(cells))
    print(f"wrote {out} and {pred_path}")
    return 0


def _tuning_keys(text: str) -> set:
    from .models import TUNING_KEYS
    m = _SPEC_RE.match(text)
    return TUNING_KEYS.get(m.group(1), set()) if m else set()


def cmd_simulate(args) -> int:
    if args.setup not in (1, 2, 3, 4):
        raise ConfigError("--setup must be 1, 2, 3 or 4")
    if args.n_r < 1:
        raise ConfigError("--n-r must be positive")
    config = DgpConfig(setup=args.setup, n_in=args.n_in, n_out=args.n_out, seed=args.seed)
    default = parse_pairs(args.tuning, "--tuning")
    specs = [parse_spec(s, {k: v for k, v in default.items() if k in _tuning_keys(s)})
             for s in split_models(args.model)]
    report = run_monte_carlo(config, specs, args.n_r, args.seed,
                             progress=lambda i, n: log.info("replication %d/%d", i, n))
    prefix = Path(args.out or f"simulation_setup{args.setup}")
    rows = [[r.model, r.tuning, r.potency, r.gauge, r.mse, r.mse_median, r.replications, r.failures]
            for r in report.rows]
    atomic_write(prefix.with_suffix(".csv"),
                 csv_text(["model", "tuning", "potency", "gauge", "mse", "mse_median",
                           "replications", "failures"], rows, report.config))
    atomic_write(prefix.with_suffix(".json"), json.dumps(report.to_dict(), indent=1, default=str) + "\n")
    print(report.table())
    print(f"wrote {prefix.with_suffix('.csv')} and {prefix.with_suffix('.json')}")
    return 0


def cmd_export_effects(args) -> int:
    if not args.model_path:
        raise ConfigError("--model-path is required")
    try:
        fitted = loads(Path(args.model_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"cannot read model file: {exc}") from exc
    m = fitted.model
    if isinstance(m, AdditiveModel):
        m = LoadedPartialLinear(m, {})
    if not isinstance(m, (LoadedPartialLinear, PartialLinearModel)):
        raise ConfigError(f"model {fitted.name!r} has no smooth terms")
    fit = m.final_fit
    if args.variable not in fit.smooth_vars:
        raise UnknownVariable(f"{args.variable!r} is not a smooth term; smooths: {fit.smooth_vars}")
    if args.grid_size < 2:
        raise ConfigError("--grid-size must be at least 2")
    levels = tuple(float(v) for v in args.quantiles.split(",")) if args.quantiles else DEFAULT_CONTEXT
    if any(not 0 <= q <= 1 for q in levels):
        raise ConfigError("quantile levels must lie in [0, 1]")
    data = load_data(args) if args.data else None
    term = fit.smooth(args.variable)
    q = m.quantiles.get(args.variable) if m.quantiles else None
    if data is not None:
        x = data.column(args.variable)
        lo, hi = x.min(), x.max()
    elif q:
        lo, hi = q[0], q[-1]
    else:
        lo, hi = term.basis.lower, term.basis.upper
    grid = np.linspace(lo, hi, args.grid_size)
    if data is None and levels and any(":" in n for n in fit.linear_terms) and not m.quantiles:
        raise ConfigError("context quantiles need --data for this model")
    curve = marginal_effects(m, args.variable, grid, levels, data)
    config = {"command": "export-effects", "model_path": args.model_path, "variable": args.variable,
              "grid_size": args.grid_size, "quantiles": list(levels), "model_config": fitted.config}
    prefix = Path(args.out or f"effects_{args.variable}")
    smooth_path = prefix.parent / (prefix.name + "_smooth.csv")
    effect_path = prefix.parent / (prefix.name + "_marginal.csv")
    atomic_write(smooth_path, csv_text(["x", "value"],
                                       [[float(x), float(v)] for x, v in zip(grid, term.evaluate(grid))],
                                       config))
    atomic_write(effect_path, csv_text(["x", "label", "value"], curve.rows(), config))
    print(f"wrote {smooth_path} and {effect_path}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plam", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_flags(sp, required=True):
        sp.add_argument("--data", required=required, help="CSV file with a header row")
        sp.add_argument("--target", required=required, help="target column")
        sp.add_argument("--kinds", help="kind overrides, e.g. Rad=excluded,Chas=binary")

    f = sub.add_parser("fit", help="fit one model and write its JSON")
    data_flags(f)
    f.add_argument("--model", required=True, help=f"one of {', '.join(MODEL_NAMES)}")
    f.add_argument("--tuning", help="key=value pairs, e.g. lambda=1se or alpha=0.01")
    f.add_argument("--family", help="gaussian or linear-probability (default: by target)")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit, k=None)

    e = sub.add_parser("evaluate", help="k-fold CV of several models on shared folds")
    data_flags(e)
    e.add_argument("--model", required=True, help="comma list, e.g. 'ols,gam,gama(alpha=0.05)'")
    e.add_argument("--tuning", help="default tuning applied where the key is valid")
    e.add_argument("--family")
    e.add_argument("--k", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--mcs-alpha", type=float, default=0.10)
    e.add_argument("--mcs-b", type=int, default=10_000)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", help="Monte Carlo sweep over one DGP setup")
    s.add_argument("--setup", type=int, default=1)
    s.add_argument("--model", required=True, help="comma list of model specs")
    s.add_argument("--tuning")
    s.add_argument("--n-r", type=int, default=200)
    s.add_argument("--n-in", type=int, default=1000)
    s.add_argument("--n-out", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output prefix (writes .csv and .json)")
    s.set_defaults(func=cmd_simulate, data=None, k=None)

    x = sub.add_parser("export-effects", help="smooth and marginal-effect curves as CSV")
    x.add_argument("--model-path", required=True)
    x.add_argument("--variable", required=True)
    x.add_argument("--grid-size", type=int, default=100)
    x.add_argument("--quantiles", help="context levels (default 0.025,0.5,0.975)")
    data_flags(x, required=False)
    x.add_argument("--out", help="output prefix")
    x.set_defaults(func=cmd_export_effects, seed=None, k=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except UnknownVariable as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PlamError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"fitting error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
