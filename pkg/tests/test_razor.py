import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fisher_razor.errors import InputError, PrecisionError
from fisher_razor.fim import gaussian_inputs
from fisher_razor.models import BernoulliModel, GaussianMeanModel, NetworkModel, SaturatingMeanModel
from fisher_razor.network import Dataset, FitConfig, NetworkSpec, fit_mle, flatten, forward, init_params, unflatten
from fisher_razor.prior import PriorConfig
from fisher_razor.razor import (
    CSV_COLUMNS,
    RazorReport,
    RazorSettings,
    balasubramanian_razor,
    bic,
    gaussian_integral_terms,
    laplace_gaussian_integral,
    log_trapezoid_box,
    marginal_code_length_quadrature,
    razor,
    remainder_bound_check,
    remainder_term,
)

from oracles import log_grid_integral_2d, naive_remainder_mp, random_psd


def test_remainder_zero_theta():
    assert remainder_term(random_psd(np.random.default_rng(0), 3), np.zeros(3), 10, PriorConfig(1, 1)) == 0.0


def test_remainder_identity_example():
    cfg = PriorConfig(1e-3, 1.0)
    assert remainder_term(np.eye(2), [1.0, 0.0], 4, cfg) == pytest.approx(0.4)
    chk = remainder_bound_check(np.eye(2), [1.0, 0.0], 4, cfg)
    assert chk.bound == pytest.approx(0.8) and chk.tight_bound == pytest.approx(0.4)
    assert chk.holds and chk.holds_tight and bool(chk)


def test_remainder_bounds_trivial_at_zero():
    chk = remainder_bound_check(np.eye(3), np.zeros(3), 5, PriorConfig(1, 1))
    assert chk.remainder == 0 and chk.bound == 0 and bool(chk)


@pytest.mark.parametrize("seed", range(5))
def test_remainder_matches_matrix_form(seed):
    rng = np.random.default_rng(seed)
    j = random_psd(rng, 5, rank=3)
    theta = rng.standard_normal(5)
    cfg = PriorConfig(1e-3, 0.8)
    assert remainder_term(j, theta, 17, cfg) == pytest.approx(naive_remainder_mp(j, theta, 17, 0.8), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 300), st.floats(0.05, 20), st.integers(0, 10_000))
def test_remainder_bounds_property(d, n, eps2, seed):
    rng = np.random.default_rng(seed)
    j = random_psd(rng, d, rank=int(rng.integers(1, d + 1)))
    theta = rng.standard_normal(d) * rng.uniform(0.1, 5)
    chk = remainder_bound_check(j, theta, n, PriorConfig(1e-3, eps2))
    assert chk.remainder >= 0
    assert chk.holds and chk.holds_tight


def test_laplace_pure_gaussian():
    cfg = PriorConfig(1e-3, 1.7)
    assert laplace_gaussian_integral(np.zeros((3, 3)), [1.0, 2.0, 3.0], 5, cfg) == pytest.approx(
        1.5 * math.log(2 * math.pi * 1.7**2)
    )


def test_laplace_scalar_closed_form():
    val = laplace_gaussian_integral(np.eye(1), [1.0], 1, PriorConfig(1e-3, 1.0))
    assert val == pytest.approx(-0.25 + 0.5 * math.log(math.pi))


def test_laplace_matches_2d_quadrature():
    rng = np.random.default_rng(7)
    j = random_psd(rng, 2, rank=1) + 0.1 * np.eye(2)
    theta = rng.standard_normal(2)
    cfg = PriorConfig(1e-3, 1.2)
    n = 3

    def log_f(a, b):
        diff = np.stack([a - theta[0], b - theta[1]])
        return -(a**2 + b**2) / (2 * cfg.eps2**2) - 0.5 * n * np.einsum("ixy,ij,jxy->xy", diff, j, diff)

    ref = log_grid_integral_2d(log_f, 20 * cfg.eps2)
    assert abs(math.expm1(laplace_gaussian_integral(j, theta, n, cfg) - ref)) < 1e-5


def test_remainder_identity_from_terms():
    rng = np.random.default_rng(2)
    j = random_psd(rng, 4)
    theta = rng.standard_normal(4)
    cfg = PriorConfig(1e-3, 0.5)
    a, b, c = gaussian_integral_terms(j, theta, 9, cfg)
    assert -c - 0.5 * b @ np.linalg.solve(a, b) == pytest.approx(remainder_term(j, theta, 9, cfg), rel=1e-10)


def test_bic_examples():
    assert bic(0.0, 2, 1) == 0.0
    assert bic(10.0, 4, 100) == pytest.approx(19.2103, abs=1e-4)
    with pytest.raises(InputError):
        bic(1.0, 1, 0)


def _linear_problem(seed=0, n=30):
    spec = NetworkSpec((2, 1), "identity", seed=seed)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    data = Dataset(x, x @ [0.5, -0.3] + 0.2 + 0.3 * rng.standard_normal(n))
    return spec, data


def test_razor_total_identity_and_fields():
    spec, data = _linear_problem()
    fit = fit_mle(spec, data, FitConfig(method="lm", tol=1e-10))
    rep = razor(spec, fit.theta, data, PriorConfig(0.01, 2.0), RazorSettings(n_volume=300))
    assert rep.total == rep.neg_log_lik + rep.dim_term + rep.log_v + rep.observed_logdet - rep.true_logdet
    assert rep.dim_term == pytest.approx(1.5 * math.log(30 / (2 * math.pi)))
    assert rep.bic - rep.neg_log_lik == pytest.approx(rep.dim_term + 1.5 * math.log(2 * math.pi))
    assert not rep.includes_remainder and not rep.warnings
    assert rep.remainder <= rep.remainder_bound_tight


def test_razor_include_remainder_flag():
    spec, data = _linear_problem()
    theta = fit_mle(spec, data, FitConfig(method="lm", tol=1e-10)).theta
    cfg = PriorConfig(0.01, 2.0)
    a = razor(spec, theta, data, cfg, RazorSettings(n_volume=200))
    b = razor(spec, theta, data, cfg, RazorSettings(n_volume=200, include_remainder=True))
    assert b.total == pytest.approx(a.total + a.remainder)


def test_razor_warns_off_stationary_point():
    spec, data = _linear_problem()
    rep = razor(spec, np.zeros(3), data, PriorConfig(0.01, 2.0), RazorSettings(n_volume=100))
    assert any("stationary" in w for w in rep.warnings)


def test_razor_rejects_wrong_length():
    spec, data = _linear_problem()
    with pytest.raises(InputError):
        razor(spec, np.zeros(4), data, PriorConfig(0.01, 2.0))


def test_razor_interpolating_net_loglik():
    spec = NetworkSpec((2, 6, 2), "tanh", seed=3)
    theta = init_params(spec)
    x = np.random.default_rng(3).standard_normal((4, 2))
    data = Dataset(x, forward(spec, theta, x))
    rep = razor(spec, theta, data, PriorConfig(0.01, 1.0), RazorSettings(n_volume=100, n_volume_inputs=16))
    assert rep.neg_log_lik == pytest.approx(4 * (2 / 2) * math.log(2 * math.pi), rel=1e-14)


def test_razor_equal_fims_cancel_for_scalar_model():
    model = GaussianMeanModel()
    y = np.random.default_rng(0).standard_normal(50) + 1
    cfg = PriorConfig(1e-6, 1e3)
    rep = razor(model, model.mle(y), y, cfg, RazorSettings(n_volume=200))
    assert rep.observed_logdet - rep.true_logdet == pytest.approx(0.5 * math.log(1 + 1 / (50 * 1e6)) - 0.5 * math.log(1 + 1e-6))


def test_razor_report_serialization():
    spec, data = _linear_problem()
    rep = razor(spec, np.zeros(3), data, PriorConfig(0.01, 2.0), RazorSettings(n_volume=100))
    doc = json.loads(rep.to_json())
    for key in ("neg_log_lik", "dim_term", "log_v", "observed_logdet", "true_logdet", "remainder", "total"):
        assert doc[key] == getattr(rep, key)
    lines = rep.to_csv().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert float(lines[1].split(",")[CSV_COLUMNS.index("total")]) == rep.total


def test_duplicate_units_shrink_observed_logdet():
    spec = NetworkSpec((2, 3, 1), "tanh", seed=1)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((10, 2))
    theta = init_params(spec) + 0.1 * rng.standard_normal(spec.n_params)
    w, b = unflatten(spec, theta)
    big = NetworkSpec((2, 4, 1), "tanh")
    w1 = np.vstack([w[0], w[0][:1]])
    b1 = np.append(b[0], b[0][0])
    w2 = np.append(w[1], w[1][0, 0] / 2)[None, :]
    w2[0, 0] /= 2
    theta_big = flatten(big, [w1, w2], [b1, b[1]])
    np.testing.assert_allclose(forward(big, theta_big, x), forward(spec, theta, x), atol=1e-14)
    data = Dataset(x, forward(spec, theta, x))
    cfg = PriorConfig(0.01, 1.0)
    st_ = RazorSettings(n_volume=50, n_volume_inputs=8)
    small = razor(spec, theta, data, cfg, st_)
    large = razor(big, theta_big, data, cfg, st_)
    k = big.n_params - spec.n_params
    s = 1 / (10 * cfg.eps2**2)
    # each added direction is null; surviving eigenvalues grow at most twofold
    assert large.observed_logdet <= small.observed_logdet + 0.5 * k * math.log(s) + 0.5 * spec.n_params * math.log(2)
    assert large.observed_logdet < small.observed_logdet


def test_balasubramanian_bernoulli():
    rng = np.random.default_rng(0)
    y = (rng.uniform(size=200) < 0.3).astype(float)
    model = BernoulliModel()
    p = float(np.mean(y))
    chi = balasubramanian_razor(model, y, [(0.01, 0.99)])
    jeff = 2 * (math.asin(math.sqrt(0.99)) - math.asin(math.sqrt(0.01)))
    nll = -(np.sum(y) * math.log(p) + (200 - np.sum(y)) * math.log(1 - p))
    # at the mle the observed and expected information coincide
    assert chi == pytest.approx(nll + 0.5 * math.log(200 / (2 * math.pi)) + math.log(jeff), rel=1e-8)


def test_balasubramanian_vs_bic_gaussian_mean():
    y = np.random.default_rng(1).standard_normal(100)
    model = GaussianMeanModel()
    chi = balasubramanian_razor(model, y, [(-5.0, 5.0)])
    nll = -model.log_likelihood(model.mle(y), y)
    assert chi - bic(nll, 1, 100) == pytest.approx(-0.5 * math.log(2 * math.pi) + math.log(10.0))


def test_balasubramanian_requires_low_dimension():
    spec = NetworkSpec((3, 1), "identity", bias=False)
    x = np.ones((2, 3))
    with pytest.raises(InputError):
        balasubramanian_razor(NetworkModel(spec), Dataset(x, np.ones(2)), [(-1, 1)] * 3, np.zeros(3))


def test_quadrature_empty_data():
    assert marginal_code_length_quadrature(GaussianMeanModel(), np.array([]), PriorConfig(1.0, 1.0)) == pytest.approx(
        0.0, abs=1e-12
    )


def test_quadrature_conjugate_gaussian_mean():
    y = np.random.default_rng(2).standard_normal(20) + 0.7
    n, eps2 = 20, 1.5
    cov = np.eye(n) + eps2**2 * np.ones((n, n))
    sign, logdet = np.linalg.slogdet(cov)
    exact = 0.5 * n * math.log(2 * math.pi) + 0.5 * logdet + 0.5 * y @ np.linalg.solve(cov, y)
    val = marginal_code_length_quadrature(GaussianMeanModel(), y, PriorConfig(1e6, eps2))
    assert abs(val - exact) < 1e-4


def test_quadrature_refinement_cap():
    with pytest.raises(PrecisionError):
        log_trapezoid_box(lambda p: -1e4 * (p[:, 0] - 0.123) ** 2, 10.0, 1, rtol=1e-12, n_start=9, max_points=33)


def test_quadrature_rejects_high_dimension():
    with pytest.raises(InputError):
        log_trapezoid_box(lambda p: np.zeros(len(p)), 1.0, 3)
    spec = NetworkSpec((3, 1), "identity", bias=False)
    with pytest.raises(InputError):
        marginal_code_length_quadrature(spec, Dataset(np.ones((1, 3)), [0.0]), PriorConfig(1, 1))


def test_razor_close_to_quadrature_on_saturating_model():
    model = SaturatingMeanModel(80, 40)
    y = 10 + np.random.default_rng(5).standard_normal(100)
    cfg = PriorConfig(1e-3, 30.0)
    rep = razor(model, model.mle(y), y, cfg, RazorSettings(n_volume=20000))
    ref = marginal_code_length_quadrature(model, y, cfg)
    assert abs(rep.total + rep.remainder - ref) < 0.1


def test_trapezoid_box_matches_gaussian_normalizer():
    val = log_trapezoid_box(lambda p: -np.sum(p**2, axis=1) / 2, 12.0, 2, rtol=1e-10)
    assert val == pytest.approx(math.log(2 * math.pi), abs=1e-9)
