import math

import numpy as np
import pytest

from fisher_razor.errors import InputError
from fisher_razor.fim import FisherMatrix
from fisher_razor.linalg import log_det_shifted
from fisher_razor.models import NetworkModel
from fisher_razor.network import Dataset, NetworkSpec
from fisher_razor.prior import PriorConfig
from fisher_razor.razor import RazorSettings, razor
from fisher_razor.spectral import (
    Spectrum,
    fit_mp,
    ks_distance,
    limit_converges,
    logdet_limit_check,
    mp_density,
    mp_log_integral,
    mp_third_term,
    network_mp_shape,
    simplified_razor,
    spectrum_of,
    taylor_log_moment,
    taylor_moment_razor,
    wishart_sampler,
)

from oracles import random_psd


def test_identity_spectrum():
    s = spectrum_of(np.eye(4))
    np.testing.assert_allclose(s.eigenvalues, 1.0)
    assert (s.m1, s.m2) == pytest.approx((1.0, 1.0))


def test_diagonal_spectrum_moments():
    s = spectrum_of(np.diag([4.0, 0.0, 0.0, 0.0]))
    assert (s.m1, s.m2) == pytest.approx((1.0, 4.0))
    assert s.counts.sum() == 4 and s.counts[0] == 3 and s.counts[-1] == 1


def test_wishart_moments_match_traces():
    a = wishart_sampler(0.5)(np.random.default_rng(0), 40)
    s = spectrum_of(FisherMatrix(a, "true_estimate", 80))
    assert s.m1 == pytest.approx(np.trace(a) / 40, rel=1e-12)
    assert s.m2 == pytest.approx(np.trace(a @ a) / 40, rel=1e-12)
    assert np.all(np.diff(s.eigenvalues) <= 0)


def test_spectrum_rejects_indefinite_and_bad_bins():
    with pytest.raises(InputError):
        spectrum_of(np.diag([1.0, -0.5]))
    with pytest.raises(InputError):
        spectrum_of(np.eye(2), n_bins=0)


def test_spectrum_exports():
    s = spectrum_of(np.diag([3.0, 1.0, 0.0]), n_bins=3)
    rows = s.histogram_csv().splitlines()
    assert rows[0] == "bin_left,bin_right,count"
    assert len(rows) == 4 and sum(int(r.split(",")[2]) for r in rows[1:]) == 3
    assert [float(v) for v in rows[-1].split(",")[:2]] == pytest.approx([2.0, 3.0])
    assert '"m1": 1.3333333333333333' in s.moments_json()


def test_logdet_bridge_is_exact():
    a = random_psd(np.random.default_rng(1), 25, rank=10)
    s = 1e-3
    assert 0.5 * 25 * spectrum_of(a).mean_log_shifted(s) == pytest.approx(0.5 * log_det_shifted(a, s), abs=1e-10)


def test_limit_check_identity_is_exact():
    rows = logdet_limit_check(lambda rng, d: np.eye(d), [5, 10], 0.3, math.log(1.3), n_draws=2)
    assert all(r.gap < 1e-14 for r in rows)


def test_limit_check_scaled_identity_zero_shift():
    rows = logdet_limit_check(lambda rng, d: 2 * np.eye(d), [3], 0.0, math.log(2), n_draws=1)
    assert rows[0].mean_logdet == pytest.approx(math.log(2), abs=1e-15)


def test_limit_check_validates():
    with pytest.raises(InputError):
        logdet_limit_check(wishart_sampler(), [10, 5], 0.1, 0.0)
    with pytest.raises(InputError):
        logdet_limit_check(wishart_sampler(), [5], -0.1, 0.0)


def test_wishart_limit_shrinks():
    target = mp_log_integral(mp_density(1.0), 0.1)
    rows = logdet_limit_check(wishart_sampler(1.0), [20, 300], 0.1, target, n_draws=4, seed=1)
    assert limit_converges(rows)


def test_simplified_razor_zero_spectrum_cancels():
    spec = spectrum_of(np.zeros((6, 6)))
    assert simplified_razor(3.0, 6, 50, spec, PriorConfig(1.0, 1.0)) == pytest.approx(3.0, abs=1e-12)


def test_simplified_razor_constant_spectrum():
    c, d, n, eps2 = 0.7, 4, 20, 2.0
    val = simplified_razor(0.0, d, n, spectrum_of(c * np.eye(d)), PriorConfig(1.0, eps2))
    assert val - 0.5 * d * math.log(n) == pytest.approx(0.5 * d * math.log(c + 1 / (n * eps2**2)))


def test_simplified_razor_tracks_full_razor_for_constant_fim():
    spec = NetworkSpec((3, 1), "identity", bias=False)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, 3)) * [1.0, 0.5, 2.0]
    data = Dataset(x, x @ [0.3, -0.2, 0.1] + rng.standard_normal(40))
    model = NetworkModel(spec, lambda r, n: x[:n], n_fim_inputs=40)  # true FIM = observed FIM
    cfg = PriorConfig(1e-4, 1.0)
    theta = np.linalg.lstsq(x, data.targets.ravel(), rcond=None)[0]
    rep = razor(model, theta, data, cfg, RazorSettings(n_volume=200))
    full = rep.dim_term + rep.log_v + rep.observed_logdet - rep.true_logdet
    simple = simplified_razor(0.0, 3, 40, spectrum_of(model.true_fim(theta)), cfg)
    assert abs(full - simple) < 0.5


def test_taylor_zero_variance():
    assert taylor_log_moment(0.4, 0.16, 0.01) == pytest.approx(math.log(0.41))


def test_taylor_direct_evaluation():
    assert taylor_log_moment(0.1, 0.05, 0.01) == pytest.approx(-3.8602, abs=1e-4)


def test_taylor_gap_against_exact_mean():
    spec = spectrum_of(wishart_sampler(1.0, 1.0)(np.random.default_rng(2), 200))
    s = 0.5
    exact = spec.mean_log_shifted(s)
    approx = taylor_log_moment(spec.m1, spec.m2, s)
    # third-order term of the expansion bounds the signed gap to leading order
    lam = spec.eigenvalues
    third = np.mean((lam - spec.m1) ** 3) / (3 * (spec.m1 + s) ** 3)
    assert abs(exact - approx) < 2 * abs(third) + 0.05
    assert exact != approx


def test_taylor_error_shrinks_with_variance():
    rng = np.random.default_rng(3)
    s = 0.05
    errs = []
    for conc in [2, 8, 32, 128, 512]:
        lam = rng.beta(conc, conc, size=20000)  # mean 1/2, variance shrinking
        exact = float(np.mean(np.log(lam + s)))
        errs.append(abs(exact - taylor_log_moment(lam.mean(), np.mean(lam**2), s)))
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_moment_razor_forms():
    cfg = PriorConfig(1.0, 1.0)
    res = taylor_moment_razor(2.0, 10, 100, 0.2, 0.04, cfg, c3=0.5)
    s = 0.01
    assert res.expansion == pytest.approx(2.0 + 5 * math.log(100) + 5 * math.log(0.21))
    assert res.closed_form == pytest.approx(2.0 + 5 * math.log(100) - 0.5 * 10 / 0.21**2)
    with pytest.raises(InputError):
        taylor_moment_razor(2.0, 10, 100, 0.2, 0.04, cfg, c3=0.0)


def test_mp_square_case():
    mp = mp_density(1.0, 2.0)
    assert mp.atom_mass == 0.0
    assert mp.support == pytest.approx((0.0, 8.0))


def test_mp_atom_mass():
    assert mp_density(4.0).atom_mass == pytest.approx(0.75)
    assert mp_density(0.5).atom_mass == 0.0


@pytest.mark.parametrize("aspect", [0.25, 0.5, 1.0, 2.0, 4.0])
def test_mp_continuous_mass(aspect):
    mp = mp_density(aspect, 1.3)
    assert mp.continuous_mass() == pytest.approx(1 - mp.atom_mass, abs=1e-6)
    assert mp.expect(lambda l: l) == pytest.approx(1.3, rel=1e-6)


def test_mp_cdf_monotone_and_complete():
    mp = mp_density(2.0)
    grid = np.linspace(-0.1, mp.support[1] + 0.1, 50)
    cdf = mp.cdf(grid)
    assert cdf[0] == 0 and cdf[-1] == pytest.approx(1.0, abs=1e-6)
    assert np.all(np.diff(cdf) >= -1e-12)


def test_mp_rejects_bad_parameters():
    with pytest.raises(InputError):
        mp_density(0.0)
    with pytest.raises(InputError):
        mp_log_integral(mp_density(1.0), 0.0)


def test_wishart_matches_mp_in_ks():
    a = wishart_sampler(0.5, 1.0)(np.random.default_rng(0), 800)
    lam = np.linalg.eigvalsh(a)
    assert ks_distance(lam, fit_mp(lam, 0.5)) < 0.05


def test_mp_log_integral_against_simulation():
    lam = np.linalg.eigvalsh(wishart_sampler(1.0)(np.random.default_rng(1), 1000))
    assert mp_log_integral(mp_density(1.0), 0.2) == pytest.approx(np.mean(np.log(np.maximum(lam, 0) + 0.2)), abs=0.01)


def test_mp_third_term_atom_limit():
    # mass almost all at the atom: term is (D/2)(-log N - 2 log eps2) to leading order
    mp = mp_density(1e6, 1e-9)
    cfg = PriorConfig(1.0, 2.0)
    val = mp_third_term(mp, 10, 100, cfg)
    assert val == pytest.approx(5 * (-math.log(100) - 2 * math.log(2.0)), rel=1e-4)


def test_network_shape():
    assert network_mp_shape(3, 20) == 60.0

