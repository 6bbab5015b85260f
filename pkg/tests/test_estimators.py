import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import draw_two_point
from smooth_eb.estimators import LargestGaussianComponent, MarginalCoverageSets, SmoothNPMLE, check_sample
from smooth_eb.exceptions import DataError
from smooth_eb.npmle import solve_npmle
from smooth_eb.posterior import denoise


def test_check_sample_shapes():
    assert len(check_sample([1.0, 2.0])) == 2
    assert len(check_sample(np.array([[1.0], [2.0]]))) == 2
    with pytest.raises(DataError):
        check_sample(np.ones((3, 2)))
    with pytest.raises(DataError):
        check_sample([1.0, 2.0], sigma=[1.0])
    with pytest.raises(ValueError):
        check_sample([1.0, np.nan])


def test_smooth_npmle_matches_functional_api():
    sample, _ = draw_two_point(400, 1)
    est = SmoothNPMLE(c=1.0).fit(sample.x)
    fit = solve_npmle(sample, 1.0)
    assert est.model_.base == fit.mixture
    assert np.allclose(est.predict(sample.x), denoise(fit.model, sample))
    T = est.transform(sample.x.reshape(-1, 1))
    assert T.shape == (400, 2) and np.allclose(T[:, 1], est.predict(sample.x))
    assert est.score(sample.x) == pytest.approx(fit.log_likelihood / 400)


def test_params_and_clone():
    est = SmoothNPMLE(c=0.5, grid_size=50)
    assert est.get_params()["grid_size"] == 50
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(NotFittedError):
        est.predict([0.0])


def test_invalid_c():
    with pytest.raises(DataError):
        SmoothNPMLE(c="big").fit([0.0, 1.0])
    with pytest.raises(DataError):
        SmoothNPMLE(c=-1.0).fit([0.0, 1.0])


def test_auto_c_records_estimate():
    sample, _ = draw_two_point(300, 2)
    est = SmoothNPMLE(random_state=0).fit(sample.x)
    assert est.c0_estimate_ is not None and est.c_ == est.c0_estimate_.c0_hat


def test_coverage_sets_estimator():
    sample, theta = draw_two_point(300, 3)
    cs = MarginalCoverageSets(c=1.0, mc_size=20_000, random_state=1).fit(sample.x)
    sets = cs.predict(sample.x[:5])
    assert len(sets) == 5 and all(s.length > 0 for s in sets)
    again = MarginalCoverageSets(c=1.0, mc_size=20_000, random_state=1).fit(sample.x)
    assert again.rules_[1.0].k_hat == cs.rules_[1.0].k_hat
    hits = cs.contains(theta, sample.x)
    assert 0.85 < hits.mean() <= 1.0
    hpd = MarginalCoverageSets(c=1.0, hpd=True, random_state=1).fit(sample.x)
    assert len(hpd.predict([0.0])[0]) >= 1


def test_largest_component_methods():
    sample, _ = draw_two_point(400, 4)
    ucb = LargestGaussianComponent(method="ucb").fit(sample.x)
    assert ucb.estimate_.mode == "ucb(0.05)" and ucb.c0_ >= 0
    slr = LargestGaussianComponent(method="slr").fit(sample.x)
    assert slr.c0_ >= 0
    with pytest.raises(DataError):
        LargestGaussianComponent(method="magic").fit(sample.x)
