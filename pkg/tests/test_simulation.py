import numpy as np
import pytest

from property_checks import check_g_values
from plam import models
from plam.evaluation import mse
from plam.models import ModelSpec
from plam.simulation import (DgpConfig, calibrate_gamma, calibrate_linear_gamma, conditional_mean, eval_g,
                             gen_dgp, make_truth, run_monte_carlo)

FAST = dict(calibration_rows=200_000)


def test_g_values():
    ok, detail = check_g_values()
    assert ok, detail
    assert np.all(eval_g(7, np.linspace(-1, 1, 5)) == 0)
    assert abs(float(eval_g(3, 1.0)) - 0.7979) < 1e-4


def test_ratio_limit_at_zero():
    from plam.simulation import _ratio
    for j, lim in {1: -5.0, 2: -5.0, 3: 0.0, 4: -1.0, 5: -10.0}.items():
        assert _ratio(j, np.array([0.0]))[0] == lim
        if j != 4:      # -exp(x)/x diverges at 0; the stored value is only a convention
            assert abs(_ratio(j, np.array([-1e-7]))[0] - lim) < 1e-4


@pytest.mark.parametrize("setup", [2, 4])
def test_uncorrelated_setups_independent(setup):
    cfg = DgpConfig(setup=setup, n_in=1000, n_out=1000, **FAST)
    train, test, _ = gen_dgp(cfg, 0)
    X = np.vstack([train.X, test.X])
    R = np.corrcoef(X.T) - np.eye(10)
    assert np.abs(R).max() < min(0.1, 3 / np.sqrt(2000))


def test_correlated_setup_dependence():
    cfg = DgpConfig(setup=1, n_in=1000, n_out=1000, **FAST)
    train, test, _ = gen_dgp(cfg, 0)
    X = np.vstack([train.X, test.X])
    strong = 0
    for j in range(1, 6):
        r = np.corrcoef(X[:, j - 1] * X[:, j + 4], eval_g(j, X[:, j - 1]))[0, 1]
        strong += abs(r) >= 0.15
    assert strong >= 3


def test_oracle_mse_and_residual_variance():
    cfg = DgpConfig(setup=1, **FAST)
    train, test, truth = gen_dgp(cfg, 3)
    assert abs(mse(conditional_mean(cfg, truth, test.X), test.y) - 1) < 0.15
    W = np.column_stack([np.ones(train.n)]
                        + [train.X[:, j - 1] * train.X[:, k - 1] for j, k in truth.relevant]
                        + [eval_g(j, train.X[:, j - 1]) for j in range(1, 6)])
    beta, *_ = np.linalg.lstsq(W, train.y, rcond=None)
    r = train.y - W @ beta
    assert abs(r @ r / (train.n - W.shape[1]) - 1) < 0.1


def test_gamma_scaling_and_structure():
    cfg = DgpConfig(setup=1, **FAST)
    g6 = calibrate_gamma(cfg)
    g12 = calibrate_gamma(DgpConfig(setup=1, xi=12.0, **FAST))
    assert set(g6) == {(j, j + 5) for j in range(1, 6)}
    for k in g6:
        assert g12[k] == pytest.approx(2 * g6[k], rel=1e-14)
    truth = make_truth(cfg)
    assert len(truth.relevant) == 5 and len(truth.catalog) == 45


def test_gamma_closed_form_uncorrelated():
    cfg = DgpConfig(setup=4, **FAST)
    target = 6 / np.sqrt(1000 * 1.0)
    for v in calibrate_gamma(cfg).values():
        assert abs(v / target - 1) < 0.05
    for v in calibrate_linear_gamma(cfg).values():
        assert abs(v / target - 1) < 0.05


def test_calibration_gives_target_t_stats():
    cfg = DgpConfig(setup=1, **FAST)
    truth = make_truth(cfg)
    cat = truth.catalog
    ts = []
    for rep in range(200):
        train, _, _ = gen_dgp(cfg, rep, truth)
        X = train.X
        W = np.column_stack([np.ones(train.n)] + [X[:, j - 1] * X[:, k - 1] for j, k in cat]
                            + [eval_g(j, X[:, j - 1]) for j in range(1, 6)])
        beta, *_ = np.linalg.lstsq(W, train.y, rcond=None)
        r = train.y - W @ beta
        s2 = r @ r / (train.n - W.shape[1])
        se = np.sqrt(s2 * np.diag(np.linalg.inv(W.T @ W)))
        ts.append([abs(beta[1 + cat.index(p)] / se[1 + cat.index(p)]) for p in truth.relevant])
    mean_t = np.mean(ts, axis=0)
    assert np.all((mean_t >= 4.5) & (mean_t <= 7.5)), mean_t


def test_monte_carlo_deterministic_and_reports_failures(monkeypatch):
    cfg = DgpConfig(setup=2, n_in=300, n_out=300, **FAST)
    specs = [ModelSpec.make("gama", alpha=0.05), ModelSpec.make("ols")]
    a = run_monte_carlo(cfg, specs, n_r=3, seed=5)
    b = run_monte_carlo(cfg, specs, n_r=3, seed=5)
    assert a.to_dict()["rows"] == b.to_dict()["rows"]
    row = a.find("gama", alpha=0.05)
    assert 0 <= row.potency <= 1 and 0 <= row.gauge <= 1 and row.replications == 3
    assert a.find("ols").potency is None
    assert "Potency" in a.table()

    real = models.fit_spec

    def flaky(spec, data, seed=0, **kw):
        if spec.name == "ols" and seed == 1:
            raise RuntimeError("synthetic failure")
        return real(spec, data, seed=seed, **kw)
    monkeypatch.setattr(models, "fit_spec", flaky)
    c = run_monte_carlo(cfg, specs, n_r=3, seed=5)
    ols = c.find("ols")
    assert ols.failures == 1 and ols.replications == 2
    assert ols.mse == pytest.approx(np.mean([r["mse"] for r in a.records if r["model"] == "ols"
                                             and r["replication"] != 1]))


def test_config_validation():
    with pytest.raises(ValueError):
        DgpConfig(setup=5)
    with pytest.raises(ValueError):
        DgpConfig(p=6, q=5, setup=1)
