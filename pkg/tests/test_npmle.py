import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from conftest import draw_two_point
from smooth_eb.exceptions import EmptySample, GridMismatch, NonFiniteData
from smooth_eb.model import Grid, Sample, SmoothModel, point_mass, validate_mixture
from smooth_eb.npmle import (
    FitOptions,
    build_grid,
    certify_optimality,
    log_likelihood,
    marginal_density,
    solve_npmle,
)


def test_grid_endpoints_and_midpoint():
    g = build_grid(Sample([-1.0, 1.0]), 0.0, FitOptions(grid_pad=0.0, grid_size=3))
    assert np.allclose(g.points, [-1, 0, 1])


def test_grid_single_observation_is_centred():
    g = build_grid(Sample([0.0]), 1.0)
    assert g.points.size == 1 and g.points[0] == 0.0
    g = build_grid(Sample([0.0]), 1.0, FitOptions(grid_size=5))
    assert np.allclose(g.points, -g.points[::-1])


def test_grid_padding_rule():
    g = build_grid(Sample([-3.0, 3.0]), 1.0, FitOptions(grid_pad=1.0, grid_size=5))
    assert np.allclose(g.points, np.linspace(-3 - math.sqrt(2), 3 + math.sqrt(2), 5))


def test_grid_default_size_capped_at_n():
    assert build_grid(Sample(np.arange(50.0))).points.size == 50
    assert build_grid(Sample(np.arange(500.0))).points.size == 300


def test_marginal_density_values():
    d0 = point_mass(0.0)
    assert marginal_density(SmoothModel(d0, 0.0), 0.0) == pytest.approx(0.3989422804, abs=1e-10)
    assert marginal_density(SmoothModel(d0, 1.0), 0.0) == pytest.approx(0.2820947918, abs=1e-10)
    m = SmoothModel(validate_mixture([-2, 2], [0.5, 0.5]), 1.0)
    # direct evaluation of the two-term sum
    direct = 0.5 * norm.pdf(2, scale=math.sqrt(2)) * 2
    assert marginal_density(m, 0.0) == pytest.approx(direct, abs=1e-12)
    assert direct == pytest.approx(0.1037768744, abs=1e-9)


def test_log_likelihood_values():
    d0 = point_mass(0.0)
    assert log_likelihood(SmoothModel(d0, 0.0), Sample([0.0])) == pytest.approx(-0.9189385, abs=1e-7)
    two = 2 * math.log(1 / (2 * math.sqrt(math.pi)))
    assert log_likelihood(SmoothModel(d0, 1.0), Sample([0.0, 0.0])) == pytest.approx(two, abs=1e-12)
    assert two == pytest.approx(-2.5310242, abs=1e-7)


def test_errors():
    with pytest.raises(EmptySample):
        solve_npmle([], 1.0)
    with pytest.raises(NonFiniteData):
        solve_npmle([0.0, np.inf], 1.0)


def test_identical_data_gives_point_mass():
    fit = solve_npmle(Sample([0.0] * 4), 1.0)
    pts = fit.grid.points
    j = int(np.argmin(np.abs(pts)))
    assert fit.weights_on_grid[j] >= 1 - 1e-6


def lattice_argmax(x, grid, sigma=1.0, step=1e-4):
    """Brute force over the 2-simplex lattice for a 3-point grid."""
    k = int(round(1 / step))
    phi = norm.pdf((np.asarray(x)[:, None] - np.asarray(grid)[None, :]) / sigma) / sigma
    best, arg = -np.inf, None
    b = np.arange(k + 1)
    for a in range(k + 1):
        bb = b[: k + 1 - a]
        W = np.column_stack([np.full(bb.size, a), bb, k - a - bb]) / k
        ll = np.sum(np.log(W @ phi.T), axis=1)
        i = int(np.argmax(ll))
        if ll[i] > best:
            best, arg = ll[i], W[i]
    return arg


@pytest.mark.parametrize("x", [[-1.0, 1.0], [-0.3, 2.2], [0.0, 3.5]])
def test_two_point_npmle_matches_lattice_search(x):
    grid = Grid(np.array([-1.0, 0.0, 1.0]) if x == [-1.0, 1.0] else np.linspace(min(x), max(x), 3))
    fit = solve_npmle(Sample(x), 0.0, grid=grid)
    brute = lattice_argmax(x, grid.points)
    assert np.max(np.abs(fit.weights_on_grid - brute)) <= 1e-3


def test_table1_fixture_gap():
    sample, _ = draw_two_point(1000, 3)
    fit = solve_npmle(sample, 1.0)
    assert fit.optimality_gap <= 1e-3
    assert len(fit.mixture) <= 1000
    assert math.isfinite(fit.log_likelihood)


@pytest.mark.parametrize("seed", range(4))
def test_em_trace_monotone(seed):
    sample, _ = draw_two_point(300, seed)
    fit = solve_npmle(sample, 0.5, FitOptions(solver="em", max_iter=500))
    tr = np.array(fit.trace)
    assert np.all(np.diff(tr) >= -1e-9 * np.abs(tr[1:]))


@pytest.mark.parametrize("seed", range(4))
def test_cnm_trace_monotone(seed):
    sample, _ = draw_two_point(300, seed)
    tr = np.array(solve_npmle(sample, 0.5).trace)
    assert np.all(np.diff(tr) >= -1e-9 * np.abs(tr[1:]))


def test_em_and_cnm_reach_same_optimum():
    sample, _ = draw_two_point(200, 9)
    a = solve_npmle(sample, 1.0)
    b = solve_npmle(sample, 1.0, FitOptions(solver="em", max_iter=5000, tol=1e-14))
    assert a.log_likelihood >= b.log_likelihood - 1e-6
    # concavity: the optimum exceeds ll(w) by at most n * gap(w)
    assert a.log_likelihood - b.log_likelihood <= len(sample) * b.optimality_gap + 1e-6
    assert b.log_likelihood - a.log_likelihood <= len(sample) * a.optimality_gap + 1e-6


def test_tighter_tol_does_not_increase_gap():
    sample, _ = draw_two_point(300, 5)
    gaps = [
        solve_npmle(sample, 1.0, FitOptions(solver="em", tol=t, max_iter=20000)).optimality_gap
        for t in (1e-6, 1e-7, 1e-8)
    ]
    assert gaps[1] <= gaps[0] + 1e-12 and gaps[2] <= gaps[1] + 1e-12


def test_certificate():
    sample, _ = draw_two_point(400, 1)
    fit = solve_npmle(sample, 1.0)
    assert certify_optimality(fit, sample, 1.0, fit.grid) <= 1e-6
    assert certify_optimality(fit.mixture, sample, 1.0, fit.grid) == pytest.approx(fit.optimality_gap, abs=1e-9)
    pts = fit.grid.points
    uniform = validate_mixture(pts, np.full(pts.size, 1 / pts.size))
    assert certify_optimality(uniform, sample, 1.0, fit.grid) > 0.01
    wrong = validate_mixture([pts[-1]], [1.0])
    assert certify_optimality(wrong, sample, 1.0, fit.grid) > 10
    with pytest.raises(GridMismatch):
        certify_optimality(validate_mixture([pts[0] + 1e-3], [1.0]), sample, 1.0, fit.grid)


def test_scale_consistency():
    rng = np.random.default_rng(2)
    sigma = rng.choice([0.5, 1.0, 1.5], 200)
    x = rng.choice([-1.5, 2.0], 200) + rng.normal(0, 0.8, 200) + sigma * rng.standard_normal(200)
    c = 0.8
    a = solve_npmle(Sample(x, sigma), c)
    b = solve_npmle(Sample(x, np.sqrt(c**2 + sigma**2)), 0.0)
    assert np.allclose(a.grid.points, b.grid.points, atol=1e-10)
    assert np.max(np.abs(a.weights_on_grid - b.weights_on_grid)) <= 1e-10


@given(st.floats(-50, 50))
def test_shift_equivariance(t):
    sample, _ = draw_two_point(150, 4)
    a = solve_npmle(sample, 1.0)
    grid = Grid(a.grid.points + t)
    b = solve_npmle(sample.shift(t), 1.0, grid=grid)
    assert np.max(np.abs(a.weights_on_grid - b.weights_on_grid)) <= 1e-10
    assert np.allclose(a.mixture.atoms + t, b.mixture.atoms, atol=1e-10)


@given(
    st.lists(st.floats(-20, 20), min_size=1, max_size=40),
    st.floats(0.0, 3.0),
    st.sampled_from([None, 7, 40]),
)
def test_fits_are_certified(xs, c, size):
    sample = Sample(xs)
    fit = solve_npmle(sample, c, FitOptions(grid_size=size))
    assert fit.optimality_gap <= 1e-3
    assert len(fit.mixture) <= len(sample)
    assert abs(fit.mixture.weights.sum() - 1) <= 1e-10
    assert fit.grid.points[0] <= min(xs) and fit.grid.points[-1] >= max(xs)
