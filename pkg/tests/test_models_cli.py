import json
import warnings

import numpy as np
import pytest

from plam import cli
from plam.data import ingest_csv
from plam.errors import ConfigError, EmptyFile, MissingTarget, NonNumericCell
from plam.models import MODEL_NAMES, ModelSpec, dumps, fit_spec, loads


def small_csv(tmp_path, n=160, seed=0, binary=False):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (n, 3))
    y = np.sin(2 * X[:, 0]) + X[:, 1] ** 2 + 0.8 * X[:, 0] * X[:, 2] + 0.3 * rng.standard_normal(n)
    if binary:
        y = (y > np.median(y)).astype(int)
    path = tmp_path / "toy.csv"
    lines = ["a,b,c,flag,const,y"]
    for i in range(n):
        lines.append(f"{X[i, 0]:.17g},{X[i, 1]:.17g},{X[i, 2]:.17g},{i % 2},7,{y[i]:.17g}")
    path.write_text("\n".join(lines) + "\n")
    return path


def run(argv):
    return cli.main([str(a) for a in argv])


def test_ingest_boston_and_credit(boston_path, credit_path):
    d = ingest_csv(boston_path, "Medv")
    assert d.p == 13 and d.n == 506 and d.kinds["Chas"] == "binary"
    c = ingest_csv(credit_path, "Card")
    assert c.n == 1319 and c.kinds["Owner"] == "binary" and c.kinds["Selfemp"] == "binary"
    assert set(np.unique(c.y)) == {0.0, 1.0}


def test_ingest_errors(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("")
    with pytest.raises(EmptyFile):
        ingest_csv(p, "y")
    p.write_text("a,y\n1,2\n")
    with pytest.raises(MissingTarget):
        ingest_csv(p, "z")
    p.write_text("a,y\n1,2\nfoo,3\n")
    with pytest.raises(NonNumericCell, match="row 3"):
        ingest_csv(p, "y")
    p.write_text("a,y\n1,2\n,3\n4,5\n")
    with pytest.warns(UserWarning, match="dropped 1"):
        assert ingest_csv(p, "y").n == 2


def test_constant_column_kept_out_of_smooths(tmp_path):
    d = ingest_csv(small_csv(tmp_path), "y")
    assert d.kinds["flag"] == "binary"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f = fit_spec(ModelSpec.make("gam"), d)
    assert "const" not in f.model.smooth_vars and "flag" not in f.model.smooth_vars


@pytest.mark.parametrize("name", ["gam", "gama", "gamla", "gamla-alasso*", "ols", "ols-augmented",
                                  "lasso", "am", "tree", "forest", "boosting"])
def test_json_round_trip(tmp_path, name):
    d = ingest_csv(small_csv(tmp_path), "y")
    tuning = {"B": 15} if name in ("forest", "boosting") else {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f = fit_spec(ModelSpec.make(name, **tuning), d, seed=1)
    g = loads(dumps(f))
    assert g.predict(d).tobytes() == f.predict(d).tobytes()
    payload = json.loads(dumps(f))
    assert payload["schema_version"] == 1 and payload["variant"] == name


def test_pltr_round_trip(tmp_path):
    d = ingest_csv(small_csv(tmp_path, binary=True), "y")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f = fit_spec(ModelSpec.make("pltr"), d, family="linear-probability")
    assert loads(dumps(f)).predict(d).tobytes() == f.predict(d).tobytes()


def test_spec_validation():
    assert set(MODEL_NAMES) >= {"gam", "gama", "gamla", "forest", "pltr"}
    with pytest.raises(ConfigError):
        ModelSpec.make("nope")
    with pytest.raises(ConfigError):
        ModelSpec.make("gama", lambda_="1se")
    with pytest.raises(ConfigError):
        ModelSpec.make("gamla", **{"lambda": "2se"})
    assert cli.split_models("ols,gama(alpha=0.01,dim=8),forest(B=5)") == \
        ["ols", "gama(alpha=0.01,dim=8)", "forest(B=5)"]
    assert cli.parse_spec("gama(alpha=0.01)").params["alpha"] == 0.01


def test_fit_and_export(tmp_path, capsys):
    data = small_csv(tmp_path)
    out = tmp_path / "m.json"
    assert run(["fit", "--data", data, "--target", "y", "--model", "gama", "--tuning", "alpha=0.01",
                "--out", out]) == 0
    text = capsys.readouterr().out
    assert "number of interactions" in text and "edf" in text
    cfg = json.loads(out.read_text())["config"]
    assert cfg["seed"] == 0 and cfg["model"] == "gama(alpha=0.01)"
    prefix = tmp_path / "eff"
    assert run(["export-effects", "--model-path", out, "--variable", "a", "--grid-size", 11,
                "--data", data, "--target", "y", "--out", prefix]) == 0
    smooth = (tmp_path / "eff_smooth.csv").read_text().splitlines()
    marg = (tmp_path / "eff_marginal.csv").read_text().splitlines()
    assert smooth[0].startswith("# config:") and smooth[1] == "x,value" and len(smooth) == 13
    assert marg[1] == "x,label,value"
    labels = {line.split(",")[1] for line in marg[2:]}
    assert {"q0.025", "q0.5", "q0.975"} <= labels
    assert not list(tmp_path.glob(".*.tmp"))


def test_exit_codes(tmp_path, capsys):
    data = small_csv(tmp_path)
    assert run(["fit", "--data", data, "--target", "y", "--model", "wat"]) == 2
    assert run(["fit", "--data", data, "--target", "y", "--model", "gama", "--tuning", "alpha=2"]) == 2
    assert run(["fit", "--data", tmp_path / "missing.csv", "--target", "y", "--model", "ols"]) == 3
    assert run(["fit", "--data", data, "--target", "nope", "--model", "ols"]) == 3
    assert run(["fit", "--data", data, "--target", "y", "--model", "pltr"]) == 4
    model = tmp_path / "m.json"
    run(["fit", "--data", data, "--target", "y", "--model", "gam", "--out", model])
    assert run(["export-effects", "--model-path", model, "--variable", "zzz", "--out", tmp_path / "e"]) == 2
    capsys.readouterr()


def test_failed_run_leaves_previous_output(tmp_path, monkeypatch):
    out = tmp_path / "keep.json"
    out.write_text("old")

    def boom(*a, **k):
        raise RuntimeError("interrupted")
    monkeypatch.setattr(cli.os, "replace", boom)
    with pytest.raises(RuntimeError):
        cli.atomic_write(out, "new")
    assert out.read_text() == "old" and not list(tmp_path.glob(".*.tmp"))


def test_evaluate_folds_shared_and_deterministic(tmp_path, capsys):
    data = small_csv(tmp_path)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    base = ["evaluate", "--data", data, "--target", "y", "--k", 5, "--seed", 3, "--mcs-b", 300]
    assert run(base + ["--model", "ols,gam", "--out", a]) == 0
    assert run(base + ["--model", "gama(alpha=0.05),ols,tree", "--out", b]) == 0
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    assert ra["folds"] == rb["folds"]
    assert ra["models"]["ols"]["mse"] == rb["models"]["ols"]["mse"]
    assert max(p["mcs_p"] for p in rb["models"].values()) == 1.0
    pred = (tmp_path / "a.predictions.csv").read_text().splitlines()
    assert pred[0].startswith("# config:") and pred[1] == "row,fold,y,ols,gam"
    capsys.readouterr()


def test_evaluate_classification(tmp_path, capsys):
    data = small_csv(tmp_path, binary=True)
    out = tmp_path / "c.json"
    assert run(["evaluate", "--data", data, "--target", "y", "--k", 5, "--model", "ols,gam",
                "--out", out]) == 0
    r = json.loads(out.read_text())
    assert r["config"]["family"] == "linear-probability"
    assert 0.5 < r["models"]["gam"]["auc"] <= 1
    assert 0 <= r["auc_tests"]["ols vs gam"]["p_value"] <= 1
    assert "pairwise AUC" in capsys.readouterr().out


def test_simulate_command(tmp_path, capsys):
    prefix = tmp_path / "sim"
    assert run(["simulate", "--setup", 4, "--model", "am(alpha=0.01),ols", "--n-r", 2, "--n-in", 200,
                "--n-out", 200, "--out", prefix]) == 0
    rows = (tmp_path / "sim.csv").read_text().splitlines()
    assert rows[0].startswith("# config:") and rows[1].startswith("model,tuning,potency")
    rep = json.loads((tmp_path / "sim.json").read_text())
    assert rep["n_r"] == 2 and len(rep["rows"]) == 2
    assert "Potency" in capsys.readouterr().out
    assert run(["simulate", "--setup", 9, "--model", "ols", "--n-r", 1]) == 2
