"""Description-length criteria: the razor, its remainder, chi, BIC.

The razor at a maximum-likelihood point is

    O = -log p(X|theta_hat) + (D/2) log(N / 2 pi) + log V
        + 1/2 log|J(theta_hat) + I/(N eps2^2)| - 1/2 log|I(theta_hat) + eps1 I|

where ``J`` is the observed and ``I`` the true Fisher information.  The
quadratic remainder ``R`` of the Laplace expansion is computed and
reported but only added to the total on request.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .errors import InputError, PrecisionError
from .fim import FisherMatrix, InputSampler, gaussian_inputs
from .linalg import eig_sym, log_det_shifted, log_det_shifted_many, psd_eigenvalues, sym_matrix
from .models import NetworkModel, true_fim_many
from .network import NetworkSpec
from .prior import PriorConfig, jeffreys_log_volume, log_volume_mc

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "d", "n", "neg_log_lik", "dim_term", "log_v", "observed_logdet",
    "true_logdet", "remainder", "total", "bic",
)
MLE_GRAD_TOL = 1e-4


@dataclass
class RazorReport:
    """Term-by-term breakdown of the razor for one fitted model.

    ``observed_logdet`` and ``true_logdet`` already carry the 1/2 factor.
    ``total`` adds ``remainder`` only when ``includes_remainder`` is set.
    """

    neg_log_lik: float
    dim_term: float
    log_v: float
    observed_logdet: float
    true_logdet: float
    remainder: float
    total: float
    d: int
    n: int
    log_v_std_error: float = 0.0
    includes_remainder: bool = False
    remainder_bound: float = 0.0
    remainder_bound_tight: float = 0.0
    grad_norm: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @property
    def bic(self) -> float:
        return bic(self.neg_log_lik, self.d, self.n)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["bic"] = self.bic
        return out

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def csv_row(self) -> list[str]:
        vals = self.to_dict()
        return [repr(float(vals[c])) if isinstance(vals[c], float) else str(vals[c]) for c in CSV_COLUMNS]

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if header:
            writer.writerow(CSV_COLUMNS)
        writer.writerow(self.csv_row())
        return buf.getvalue()


@dataclass(frozen=True)
class RemainderCheck:
    """``|R|`` against the bound ``N l / (eps2^2 N l + 1) |theta|^2`` and its half."""

    remainder: float
    bound: float
    tight_bound: float

    @property
    def holds(self) -> bool:
        return abs(self.remainder) <= self.bound * (1 + 1e-12) + 1e-300

    @property
    def holds_tight(self) -> bool:
        return abs(self.remainder) <= self.tight_bound * (1 + 1e-12) + 1e-300

    def __bool__(self) -> bool:
        return self.holds and self.holds_tight


def _matrix(f) -> NDArray[np.float64]:
    return f.matrix if isinstance(f, FisherMatrix) else sym_matrix(f)


def remainder_term(j_hat: FisherMatrix | ArrayLike, theta_hat: ArrayLike, n: int, config: PriorConfig) -> float:
    """Quadratic remainder ``R`` from the eigendecomposition of ``J``.

    With ``J = Q diag(l) Q^T`` and ``a = Q^T theta_hat``,
    ``R = 1/2 sum_i a_i^2 N l_i / (N l_i eps2^2 + 1)``.
    """
    mat = _matrix(j_hat)
    theta_hat = np.asarray(theta_hat, dtype=np.float64).ravel()
    eig = eig_sym(mat)
    lam = np.maximum(eig.eigenvalues, 0.0)
    a = eig.eigenvectors.T @ theta_hat
    return float(0.5 * np.sum(a**2 * n * lam / (n * lam * config.eps2**2 + 1.0)))


def remainder_bound_check(j_hat, theta_hat: ArrayLike, n: int, config: PriorConfig) -> RemainderCheck:
    mat = _matrix(j_hat)
    theta_hat = np.asarray(theta_hat, dtype=np.float64).ravel()
    lam_m = float(psd_eigenvalues(mat)[0])
    bound = n * lam_m / (config.eps2**2 * n * lam_m + 1.0) * float(theta_hat @ theta_hat)
    return RemainderCheck(remainder_term(mat, theta_hat, n, config), bound, 0.5 * bound)


def gaussian_integral_terms(j_hat, theta_hat: ArrayLike, n: int, config: PriorConfig):
    """``A = N J + I/eps2^2``, ``b = N J theta_hat``, ``c = -1/2 theta_hat^T N J theta_hat``."""
    mat = _matrix(j_hat)
    theta_hat = np.asarray(theta_hat, dtype=np.float64).ravel()
    nj = n * mat
    a = nj + np.eye(mat.shape[0]) / config.eps2**2
    b = nj @ theta_hat
    c = -0.5 * float(theta_hat @ nj @ theta_hat)
    return a, b, c


def laplace_gaussian_integral(j_hat, theta_hat: ArrayLike, n: int, config: PriorConfig) -> float:
    """Log of the integral of ``exp(-|t|^2/2eps2^2 - N/2 (t - theta_hat)^T J (t - theta_hat))``.

    Evaluated as ``1/2 b^T A^-1 b + c + (D/2) log 2 pi - 1/2 log|A|``.  The
    identity ``R = -c - 1/2 b^T A^-1 b`` is checked on the way.
    """
    a, b, c = gaussian_integral_terms(j_hat, theta_hat, n, config)
    d = a.shape[0]
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise PrecisionError("A = N J + I/eps2^2 is not positive definite") from exc
    z = np.linalg.solve(chol, b)
    quad = float(z @ z)
    logdet_a = 2.0 * float(np.sum(np.log(np.diag(chol))))
    r = remainder_term(j_hat, theta_hat, n, config)
    if abs((-c - 0.5 * quad) - r) > 1e-8 * max(1.0, abs(c)):
        raise PrecisionError("remainder identity R = -c - b^T A^-1 b / 2 violated")
    return 0.5 * quad + c + 0.5 * d * math.log(2.0 * math.pi) - 0.5 * logdet_a


def bic(neg_log_lik: float, d: int, n: int) -> float:
    """``-log p(X|theta_hat) + (d/2) log n``."""
    if n < 1:
        raise InputError("n must be >= 1")
    return neg_log_lik + 0.5 * d * math.log(n)


# --------------------------------------------------------------------------
# the razor


@dataclass
class RazorSettings:
    """Monte-Carlo sizes and seeding for :func:`razor`.

    ``n_true_fim`` defaults to ``100 * N`` inputs.  For multi-layer nets the
    volume uses a cheaper input set of ``n_volume_inputs``; single-layer nets
    have a parameter-independent FIM and share the true-FIM inputs.
    """

    input_sampler: InputSampler | None = None
    n_true_fim: int | None = None
    n_volume: int = 2000
    n_volume_inputs: int = 256
    seed: int = 0
    include_remainder: bool = False
    volume_chunk: int = 512


def razor(model, theta_hat: ArrayLike, data, config: PriorConfig, settings: RazorSettings | None = None) -> RazorReport:
    """Assemble the razor at ``theta_hat``.

    ``model`` is a :class:`NetworkSpec` (with a :class:`Dataset`) or one
    of the model objects in :mod:`fisher_razor.models`.  A gradient sup-norm
    above ``1e-4`` at ``theta_hat`` is flagged in ``warnings`` but does not
    stop the computation.
    """
    st = settings or RazorSettings()
    theta_hat = np.asarray(theta_hat, dtype=np.float64).ravel()
    n = model.n_obs(data) if not isinstance(model, NetworkSpec) else data.n
    n_true = st.n_true_fim or 100 * n
    if isinstance(model, NetworkSpec):
        sampler = st.input_sampler or gaussian_inputs(model.input_dim)
        true_model = NetworkModel(model, sampler, n_fim_inputs=n_true, seed=st.seed)
        vol_model = (
            true_model
            if model.is_linear_in_params
            else NetworkModel(model, sampler, n_fim_inputs=st.n_volume_inputs, seed=st.seed)
        )
    else:
        true_model = vol_model = model
    d = true_model.n_params
    if theta_hat.shape[0] != d:
        raise InputError(f"theta_hat has length {theta_hat.shape[0]}, model has {d} parameters")

    notes = []
    grad_norm = float(np.max(np.abs(true_model.gradient(theta_hat, data))))
    if grad_norm > MLE_GRAD_TOL:
        msg = f"theta_hat is not a stationary point (|grad|_inf = {grad_norm:.2e})"
        logger.warning(msg)
        notes.append(msg)

    nll = -true_model.log_likelihood(theta_hat, data)
    j_hat = sym_matrix(true_model.observed_fim(theta_hat, data))
    i_hat = sym_matrix(true_model.true_fim(theta_hat))
    vol = log_volume_mc(vol_model, config, st.n_volume, st.seed, chunk_size=st.volume_chunk)
    if vol.warning:
        notes.append(vol.warning)
    dim_term = 0.5 * d * math.log(n / (2.0 * math.pi))
    observed_logdet = 0.5 * log_det_shifted(j_hat, 1.0 / (n * config.eps2**2))
    true_logdet = 0.5 * log_det_shifted(i_hat, config.eps1)
    check = remainder_bound_check(j_hat, theta_hat, n, config)
    total = nll + dim_term + vol.log_v + observed_logdet - true_logdet
    if st.include_remainder:
        total += check.remainder
    return RazorReport(
        neg_log_lik=nll,
        dim_term=dim_term,
        log_v=vol.log_v,
        observed_logdet=observed_logdet,
        true_logdet=true_logdet,
        remainder=check.remainder,
        total=total,
        d=d,
        n=n,
        log_v_std_error=vol.std_error,
        includes_remainder=st.include_remainder,
        remainder_bound=check.bound,
        remainder_bound_tight=check.tight_bound,
        grad_norm=grad_norm,
        warnings=notes,
    )


def balasubramanian_razor(model, data, domain: Sequence[tuple[float, float]], theta_hat: ArrayLike | None = None) -> float:
    """Classical razor ``chi`` with Jeffreys' prior on a bounded box.

    ``chi = -log p(X|theta_hat) + (D/2) log(N/2 pi) + log int sqrt|I|
    + 1/2 log(|J(theta_hat)| / |I(theta_hat)|)``.  Requires a model with
    ``mle`` when ``theta_hat`` is omitted, and a Fisher information that is
    positive definite on the box.
    """
    d = model.n_params
    if d > 2:
        raise InputError("chi is only evaluated for models with at most two parameters")
    theta_hat = model.mle(data) if theta_hat is None else np.asarray(theta_hat, dtype=np.float64).ravel()
    n = model.n_obs(data)
    nll = -model.log_likelihood(theta_hat, data)
    log_vol = jeffreys_log_volume(model, domain)
    j_hat = model.observed_fim(theta_hat, data)
    i_hat = model.true_fim(theta_hat)
    ratio = 0.5 * (log_det_shifted(j_hat, 0.0) - log_det_shifted(i_hat, 0.0))
    return nll + 0.5 * d * math.log(n / (2.0 * math.pi)) + log_vol + ratio


# --------------------------------------------------------------------------
# quadrature oracle for -log p(X)


def log_trapezoid_box(
    log_f: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    halfwidth: float,
    dim: int,
    rtol: float = 1e-6,
    n_start: int | None = None,
    max_points: int | None = None,
) -> float:
    """Log of the integral of ``exp(log_f)`` over ``[-halfwidth, halfwidth]^dim``.

    Trapezoid rule on uniform grids whose spacing is halved until the
    integral changes by at most ``rtol`` (relative).  ``log_f`` maps a
    ``(K, dim)`` array of points to ``(K,)`` log-values.  Raises
    :class:`PrecisionError` if the cap on points per axis is reached first.
    """
    if dim not in (1, 2):
        raise InputError("quadrature is implemented for one or two dimensions")
    n = n_start or (1025 if dim == 1 else 129)
    cap = max_points or ((1 << 20) + 1 if dim == 1 else 4097)
    prev = None
    while n <= cap:
        nodes = np.linspace(-halfwidth, halfwidth, n)
        h = nodes[1] - nodes[0]
        lw = np.full(n, math.log(h))
        lw[[0, -1]] -= math.log(2.0)
        if dim == 1:
            pts = nodes[:, None]
            logw = lw
        else:
            g0, g1 = np.meshgrid(nodes, nodes, indexing="ij")
            pts = np.column_stack([g0.ravel(), g1.ravel()])
            logw = (lw[:, None] + lw[None, :]).ravel()
        cur = float(logsumexp(log_f(pts) + logw))
        if prev is not None and abs(math.expm1(cur - prev)) <= rtol:
            return cur
        prev = cur
        n = 2 * n - 1
    raise PrecisionError(f"trapezoid quadrature did not reach rtol={rtol} within {cap} points per axis")


def _log_prior_unnorm_many(model, thetas, config: PriorConfig, cutoff: float = 80.0) -> NDArray[np.float64]:
    gauss = -np.sum(thetas**2, axis=1) / (2.0 * config.eps2**2)
    out = np.full(thetas.shape[0], -np.inf)
    live = gauss > np.max(gauss) - cutoff
    out[live] = gauss[live] + _half_logdet_many(model, thetas[live], config.eps1)
    return out


def _half_logdet_many(model, thetas, eps1: float, chunk: int = 4096) -> NDArray[np.float64]:
    out = np.empty(thetas.shape[0])
    for s in range(0, thetas.shape[0], chunk):
        logdets, _ = log_det_shifted_many(true_fim_many(model, thetas[s : s + chunk]), eps1)
        out[s : s + chunk] = 0.5 * logdets
    return out


def marginal_code_length_quadrature(
    model,
    data,
    config: PriorConfig,
    halfwidth: float | None = None,
    rtol: float = 1e-6,
    max_points: int | None = None,
) -> float:
    """``-log int p(X|theta) p(theta) dtheta`` by trapezoid quadrature, for ``D <= 2``.

    The prior is normalized by the same quadrature on the box
    ``[-20 eps2, 20 eps2]^D`` (or ``halfwidth``).  Grid points whose
    Gaussian-times-likelihood weight is more than ``e^80`` below the peak
    skip the FIM evaluation.  A :class:`NetworkSpec` is wrapped with a
    standard-normal input set of 1000 points.
    """
    if isinstance(model, NetworkSpec):
        model = NetworkModel(model)
    d = model.n_params
    if d > 2:
        raise InputError("quadrature oracle is limited to D <= 2")
    hw = 20.0 * config.eps2 if halfwidth is None else halfwidth

    def log_joint(pts):
        ll = model.log_likelihood_many(pts, data) - np.sum(pts**2, axis=1) / (2.0 * config.eps2**2)
        out = np.full(pts.shape[0], -np.inf)
        live = ll > np.max(ll) - 80.0
        out[live] = ll[live] + _half_logdet_many(model, pts[live], config.eps1)
        return out

    log_z = log_trapezoid_box(lambda p: _log_prior_unnorm_many(model, p, config), hw, d, rtol, max_points=max_points)
    log_num = log_trapezoid_box(log_joint, hw, d, rtol, max_points=max_points)
    return -(log_num - log_z)
