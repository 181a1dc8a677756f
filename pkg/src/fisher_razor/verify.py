"""Quick randomized checks of the bounds and identities, used by ``fisher-razor verify``.

Each check returns a :class:`CheckResult`; the suite is deterministic for a
given seed.  Sizes are kept small so the whole run takes a few seconds; the
full-size versions live in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fim import local_dimensionality, observed_fim, rank_bound_check, true_fim_estimate, gaussian_inputs, zero_inputs
from .experiments import FIG2_C3, FIG2_SHIFT, figure2_curves
from .linalg import log_det_shifted
from .network import Dataset, NetworkSpec, forward, init_params, jacobian
from .prior import PriorConfig, log_volume_mc, volume_bounds
from .razor import laplace_gaussian_integral, remainder_bound_check, remainder_term
from .spectral import limit_converges, logdet_limit_check, mp_density, mp_log_integral, spectrum_of, wishart_sampler


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<28} {self.detail}"


def _random_spec(rng, max_width=6, activations=("tanh", "relu", "identity"), bias=True) -> NetworkSpec:
    depth = int(rng.integers(1, 4))
    widths = [int(w) for w in rng.integers(1, max_width + 1, size=depth + 1)]
    return NetworkSpec(tuple(widths), str(rng.choice(activations)), seed=int(rng.integers(1 << 31)), bias=bias)


def check_rank_bound(rng, inject: bool = False) -> CheckResult:
    worst = 0
    for _ in range(20):
        spec = _random_spec(rng)
        n = int(rng.integers(1, 8))
        x = rng.standard_normal((n, spec.input_dim))
        f = observed_fim(spec, init_params(spec), x)
        ok = rank_bound_check(f, spec.output_dim, n)
        worst += not ok
    return CheckResult("rank_bound", worst == 0, f"{20 - worst}/20 observed ranks <= min(D, mN)")


def check_signature(rng, inject: bool = False) -> CheckResult:
    bad = 0
    for _ in range(10):
        spec = _random_spec(rng)
        theta = init_params(spec)
        f = true_fim_estimate(spec, theta, gaussian_inputs(spec.input_dim), 50, seed=int(rng.integers(1 << 31)))
        rep = local_dimensionality(f, 1e-10 * max(f.eigenvalues()[0], 1e-300))
        pos, neg, zero = rep.signature
        bad += neg != 0 or pos + zero != spec.n_params
    return CheckResult("metric_signature", bad == 0, f"{10 - bad}/10 signatures of form (d, 0, D-d)")


def check_volume_bounds(rng, inject: bool = False) -> CheckResult:
    cfg = PriorConfig(eps1=0.05, eps2=0.7)
    ok = 0
    for _ in range(3):
        spec = _random_spec(rng, max_width=3)
        est = log_volume_mc(spec, cfg, 200, seed=int(rng.integers(1 << 31)), n_inputs=32)
        s = 3 * est.std_error
        ok += est.log_lower - s <= est.log_v <= est.log_upper + s
    spec = NetworkSpec((2, 3, 1), "tanh", bias=False)
    deg = log_volume_mc(spec, cfg, 100, input_sampler=zero_inputs(2), n_inputs=4)
    lower = volume_bounds(spec.n_params, cfg, 0.0).log_lower
    exact = abs(deg.log_v - lower) < 1e-10
    return CheckResult("volume_bounds", ok == 3 and exact,
                       f"{ok}/3 estimates inside bounds; zero-FIM gap {abs(deg.log_v - lower):.1e}")


def check_remainder_bounds(rng, inject: bool = False) -> CheckResult:
    bad = 0
    for _ in range(50):
        d = int(rng.integers(1, 8))
        g = rng.standard_normal((d, d + 2))
        j = g @ g.T / (d + 2)
        theta = rng.standard_normal(d) * rng.uniform(0.1, 3)
        n = int(rng.integers(1, 200))
        cfg = PriorConfig(1e-3, float(rng.uniform(0.1, 5)))
        chk = remainder_bound_check(j, theta, n, cfg)
        if inject:
            # debug hook: pretend the tight bound is a quarter of its value
            chk = type(chk)(chk.remainder, chk.bound, 0.25 * chk.bound)
        bad += not bool(chk)
    return CheckResult("remainder_bounds", bad == 0, f"{50 - bad}/50 instances within both bounds")


def check_laplace(rng, inject: bool = False) -> CheckResult:
    worst = 0.0
    for _ in range(3):
        g = rng.standard_normal((2, 3))
        j = g @ g.T / 3
        theta = rng.standard_normal(2)
        n, cfg = int(rng.integers(1, 5)), PriorConfig(1e-3, 1.0)
        val = laplace_gaussian_integral(j, theta, n, cfg)
        t = np.linspace(-20, 20, 1601)
        a, b = np.meshgrid(t, t, indexing="ij")
        diff = np.stack([a - theta[0], b - theta[1]])
        quad = np.einsum("ixy,ij,jxy->xy", diff, j, diff)
        log_f = -(a**2 + b**2) / 2 - 0.5 * n * quad
        top = log_f.max()
        num = np.trapezoid(np.trapezoid(np.exp(log_f - top), t, axis=1), t)
        worst = max(worst, abs(math.expm1(val - (top + math.log(num)))))
    return CheckResult("laplace_integral", worst < 1e-5, f"max relative error {worst:.1e}")


def check_logdet_limit(rng, inject: bool = False) -> CheckResult:
    target = mp_log_integral(mp_density(1.0, 1.0), 0.1)
    rows = logdet_limit_check(wishart_sampler(1.0), [25, 200], 0.1, target, n_draws=3, seed=int(rng.integers(1 << 31)))
    ok = limit_converges(rows) and rows[-1].rel_gap < 0.05
    return CheckResult("logdet_limit", ok, " ".join(f"d={r.d}:{r.rel_gap:.2%}" for r in rows))


def check_jacobian(rng, inject: bool = False) -> CheckResult:
    worst = 0.0
    for _ in range(5):
        spec = _random_spec(rng, activations=("tanh", "identity"))
        theta = init_params(spec) + 0.1 * rng.standard_normal(spec.n_params)
        x = rng.standard_normal(spec.input_dim)
        jac = jacobian(spec, theta, x)
        h = 1e-5
        fd = np.stack([(forward(spec, theta + h * e, x) - forward(spec, theta - h * e, x)) / (2 * h)
                       for e in np.eye(spec.n_params)], axis=1)
        worst = max(worst, float(np.max(np.abs(jac - fd)) / max(np.max(np.abs(jac)), 1e-12)))
    return CheckResult("jacobian_finite_diff", worst < 1e-5, f"max relative error {worst:.1e}")


def check_toy_curves(rng, inject: bool = False) -> CheckResult:
    pts = figure2_curves()
    err = max(abs((p.bic - p.mdl) - FIG2_C3 * p.d / (1 / math.sqrt(0.5 * p.d) + FIG2_SHIFT) ** 2) for p in pts)
    late = [p for p in pts if p.d >= 100]
    shape = all(b.bic > a.bic and b.mdl < a.mdl for a, b in zip(late, late[1:]))
    return CheckResult("toy_curves", err < 1e-9 and shape, f"identity error {err:.1e}; eventual monotonicity {shape}")


def check_spectral_bridge(rng, inject: bool = False) -> CheckResult:
    g = rng.standard_normal((30, 10))
    a = g @ g.T / 10
    s = 0.01
    spec = spectrum_of(a)
    lhs = 0.5 * a.shape[0] * spec.mean_log_shifted(s)
    rhs = 0.5 * log_det_shifted(a, s)
    return CheckResult("spectral_logdet_bridge", abs(lhs - rhs) < 1e-10, f"difference {abs(lhs - rhs):.1e}")


CHECKS: tuple[Callable[..., CheckResult], ...] = (
    check_rank_bound, check_signature, check_volume_bounds, check_remainder_bounds,
    check_laplace, check_logdet_limit, check_jacobian, check_toy_curves, check_spectral_bridge,
)


def run_all(seed: int = 0, inject_violation: bool = False) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [chk(rng, inject=inject_violation) for chk in CHECKS]
