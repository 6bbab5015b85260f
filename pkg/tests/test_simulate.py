import math

import numpy as np
import pytest
from scipy.integrate import quad

from smooth_eb.exceptions import DataError
from smooth_eb.metrics import DensityFn, l2_sq
from smooth_eb.simulate import (
    GammaPrior,
    LaplacePrior,
    Scenario,
    TABLE3_SIGMAS,
    TwoPointPrior,
    named_scenario,
    run_figure_fixture,
    run_scenario,
)


def test_laplace_marginal_closed_form():
    p = LaplacePrior()
    for x in (-3.0, 0.0, 1.2):
        direct = quad(lambda t: 0.5 * math.exp(-abs(t)) * math.exp(-0.5 * (x - t) ** 2) / math.sqrt(2 * math.pi),
                      -40, 40, points=[0.0, x], limit=200)[0]
        assert p.marginal(x) == pytest.approx(direct, abs=1e-10)
    assert p.marginal(0.0, 0.7) == pytest.approx(
        quad(lambda t: 0.5 * math.exp(-abs(t)) * math.exp(-0.5 * (t / 0.7) ** 2) / (0.7 * math.sqrt(2 * math.pi)),
             -40, 40, points=[0.0], limit=200)[0], abs=1e-10)


def test_gamma_marginal_closed_form():
    p = GammaPrior()
    for x in (-2.0, 0.5, 4.0):
        direct = quad(lambda t: math.exp(-t) * math.exp(-0.5 * (x - t) ** 2) / math.sqrt(2 * math.pi), 0, 60)[0]
        assert p.marginal(x) == pytest.approx(direct, abs=1e-10)


def test_inverse_cdf_samplers():
    rng = np.random.default_rng(0)
    lap = LaplacePrior().sample_theta(200_000, rng)
    assert abs(lap.mean()) < 0.02 and lap.var() == pytest.approx(2.0, rel=0.02)
    gam = GammaPrior().sample_theta(200_000, rng)
    assert gam.min() >= 0 and gam.mean() == pytest.approx(1.0, rel=0.01)


def test_named_scenarios():
    t1 = named_scenario("table1", a=2)
    assert t1.prior == "two-point" and t1.c == 1.0 and t1.n == 1000 and t1.reps == 20
    t2 = named_scenario("table2", prior="gamma")
    assert t2.mode == "estimate" and t2.prior == "gamma"
    t3 = named_scenario("table3", a=0)
    assert t3.sigma_levels == TABLE3_SIGMAS and t3.sigma_probs == (0.25,) * 4
    with pytest.raises(DataError):
        named_scenario("table9")
    with pytest.raises(DataError):
        Scenario(prior="laplace", mode="oracle")
    with pytest.raises(DataError):
        Scenario(reps=0)


def small(**kw):
    base = dict(n=300, reps=2, seed=4, calib_mc=20_000, eval_mc=5_000)
    base.update(kw)
    return Scenario(**base)


def test_run_scenario_deterministic():
    a = run_scenario(small())
    b = run_scenario(small())
    assert a.rows == b.rows
    assert len(a.rows) == 2 and 0.85 < a.coverage_mean < 1.0
    assert a.c0_mean is None
    assert a.rows_csv().splitlines()[0].startswith("rep,seed,")


def test_threads_do_not_change_results():
    a = run_scenario(small(reps=3))
    b = run_scenario(small(reps=3), threads=2)
    assert a.rows == b.rows


def test_oracle_row_close_to_nominal():
    r = run_scenario(small(a=2.0, n=500, include_oracle=True, calib_mc=50_000, eval_mc=20_000))
    assert r.oracle_coverage_mean == pytest.approx(0.95, abs=0.01)


def test_estimate_mode_reports_c0():
    r = run_scenario(small(prior="laplace", mode="estimate", reps=1))
    assert r.c0_mean is not None and r.rows[0]["c_used"] >= 0.01


def test_heteroscedastic_scenario_runs():
    r = run_scenario(small(a=0.0, sigma_levels=TABLE3_SIGMAS, reps=1))
    assert 0.85 < r.coverage_mean < 1.0


def test_figure_two_comp():
    fig = run_figure_fixture("two-comp", 1000, seed=0)
    assert fig.theta.size == fig.x.size == 1001
    assert fig.errors()["l2_prior"] <= 0.05
    lines = fig.prior_csv().splitlines()
    assert lines[0] == "theta,g_true,g_smooth_npmle" and len(lines) == 1002
    assert fig.marginal_csv().splitlines()[0] == "x,f_true,f_fit"


def test_figure_laplace():
    fig = run_figure_fixture("laplace", 1000, seed=0)
    assert fig.errors()["tv_marginal"] <= 0.05


def test_figure_guards():
    with pytest.raises(DataError):
        run_figure_fixture("two-comp", 50)
    with pytest.raises(DataError):
        run_figure_fixture("cauchy", 1000)


def test_figure_error_decreases_with_n():
    truth = TwoPointPrior(2.0, 1.0)
    g_true = DensityFn(truth.density, *truth.window())
    med = []
    for n in (100, 4000):
        errs = [
            math.sqrt(l2_sq(DensityFn.prior(run_figure_fixture("two-comp", n, seed=s, c=1.0).model), g_true))
            for s in range(10)
        ]
        med.append(np.median(errs))
    assert med[0] > med[1]
