"""The bi-parametric prior and its normalizer.

The prior density on parameters is proportional to

    exp(-|theta|^2 / (2 eps2^2)) * sqrt(det(I(theta) + eps1 * Id))

against Lebesgue measure.  Its normalizer ``V`` (the information volume)
has no closed form for networks and is estimated by importance sampling
with the Gaussian factor as proposal.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from .errors import DivergenceError, InputError
from .fim import FisherMatrix, InputSampler
from .linalg import log_det_shifted, log_det_shifted_many
from .models import NetworkModel, true_fim_many
from .network import NetworkSpec

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorConfig:
    """``eps1`` shifts the metric, ``eps2`` is the Gaussian scale of theta."""

    eps1: float
    eps2: float

    def __post_init__(self) -> None:
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise InputError(f"eps1 and eps2 must be positive, got {self.eps1}, {self.eps2}")


class VolumeBounds(NamedTuple):
    log_lower: float
    log_upper: float
    log_upper_trace: float | None = None


@dataclass(frozen=True)
class VolumeEstimate:
    """Monte-Carlo ``log V`` with its delta-method standard error and bounds.

    ``log_upper`` uses ``lambda_max``, the largest FIM eigenvalue seen over
    the sampled parameters; ``log_upper_trace`` uses the largest
    ``trace / D`` instead and is never looser.
    """

    log_v: float
    std_error: float
    n_mc: int
    log_lower: float
    log_upper: float
    lambda_max: float
    log_upper_trace: float
    warning: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "VolumeEstimate":
        return cls(**json.loads(text))


def log_unnormalized_prior(theta: ArrayLike, config: PriorConfig, fim_at_theta: FisherMatrix | ArrayLike) -> float:
    """Log of the prior density at ``theta`` without the ``1/V`` factor."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    mat = fim_at_theta.matrix if isinstance(fim_at_theta, FisherMatrix) else fim_at_theta
    if np.shape(mat)[0] != theta.shape[0]:
        raise InputError("FIM dimension does not match theta")
    return float(-(theta @ theta) / (2.0 * config.eps2**2) + 0.5 * log_det_shifted(mat, config.eps1))


def volume_bounds(d: int, config: PriorConfig, lambda_max: float, trace: float | None = None) -> VolumeBounds:
    """Lower and upper bounds on ``log V``.

    ``D log(sqrt(2 pi eps1) eps2) <= log V <= D log(sqrt(2 pi (eps1 + lambda_max)) eps2)``.
    With ``trace`` (an upper bound on ``tr I(theta)`` over the parameters),
    the arithmetic-geometric mean form ``D log(sqrt(2 pi) eps2) +
    (D/2) log(trace/D + eps1)`` is also returned.
    """
    if lambda_max < 0:
        raise InputError("lambda_max must be nonnegative")
    base = d * (HALF_LOG_2PI + math.log(config.eps2))
    lower = base + 0.5 * d * math.log(config.eps1)
    upper = base + 0.5 * d * math.log(config.eps1 + lambda_max)
    tr_bound = None if trace is None else base + 0.5 * d * math.log(trace / d + config.eps1)
    return VolumeBounds(lower, upper, tr_bound)


def _as_model(model, input_sampler: InputSampler | None, n_inputs: int, seed: int):
    if isinstance(model, NetworkSpec):
        return NetworkModel(model, input_sampler, n_fim_inputs=n_inputs, seed=seed)
    return model


def log_volume_mc(
    model,
    config: PriorConfig,
    n_mc: int,
    seed: int = 0,
    *,
    input_sampler: InputSampler | None = None,
    n_inputs: int = 256,
    fim_fn: Callable[[NDArray[np.float64]], ArrayLike] | None = None,
    chunk_size: int = 512,
) -> VolumeEstimate:
    """Importance-sampling estimate of ``log V``.

    Draws ``theta ~ N(0, eps2^2 I)`` so that ``log V = D log(sqrt(2 pi) eps2)
    + log E[sqrt det(I(theta) + eps1 I)]``, the expectation being a
    log-mean-exp over the draws.

    ``model`` is a :class:`NetworkSpec` (its true FIM estimated from
    ``n_inputs`` inputs of ``input_sampler``, shared across draws) or any
    object with ``n_params`` and ``true_fim``.  ``fim_fn`` overrides the
    FIM entirely.  Draws are generated in chunks from streams spawned off
    ``seed``; the result depends only on ``(seed, chunk_size)``.
    """
    model = _as_model(model, input_sampler, n_inputs, seed)
    d = model.n_params
    note = ""
    if n_mc < 100:
        note = f"n_mc={n_mc} < 100: volume estimate is imprecise"
    n_mc = max(int(n_mc), 1)
    n_chunks = -(-n_mc // chunk_size)
    streams = np.random.SeedSequence([seed, 0x5EED]).spawn(n_chunks)
    halves, lam_max, tr_max = [], 0.0, 0.0
    for i, ss in enumerate(streams):
        k = min(chunk_size, n_mc - i * chunk_size)
        thetas = np.random.default_rng(ss).normal(0.0, config.eps2, size=(k, d))
        if fim_fn is not None:
            stack = np.stack([np.asarray(fim_fn(t), dtype=np.float64).reshape(d, d) for t in thetas])
        else:
            stack = true_fim_many(model, thetas)
        logdets, vals = log_det_shifted_many(stack, config.eps1)
        halves.append(0.5 * logdets)
        lam_max = max(lam_max, float(np.max(vals[:, 0])))
        tr_max = max(tr_max, float(np.max(np.sum(vals, axis=1))))
    w = np.concatenate(halves)
    top = float(np.max(w))
    e = np.exp(w - top)
    mean_e = float(np.mean(e))
    log_v = d * (HALF_LOG_2PI + math.log(config.eps2)) + top + math.log(mean_e)
    std_error = float(np.std(e, ddof=1) / math.sqrt(n_mc) / mean_e) if n_mc > 1 else math.inf
    bounds = volume_bounds(d, config, lam_max, trace=tr_max)
    return VolumeEstimate(
        log_v=log_v,
        std_error=std_error,
        n_mc=n_mc,
        log_lower=bounds.log_lower,
        log_upper=bounds.log_upper,
        lambda_max=lam_max,
        log_upper_trace=float(bounds.log_upper_trace),
        warning=note,
    )


def jeffreys_log_volume(model, domain: Sequence[tuple[float, float]]) -> float:
    """``log`` of the integral of ``sqrt det I(theta)`` over a box, by adaptive quadrature.

    Only for regular models with one or two parameters.  Raises
    :class:`DivergenceError` when the integral is not finite on ``domain``.
    """
    d = model.n_params
    if d > 2 or len(domain) != d:
        raise InputError("Jeffreys normalization is available for 1-2 parameter models on a matching box")

    def sqrt_det(*theta: float) -> float:
        fim = np.asarray(true_fim_many(model, np.array([theta]))[0])
        det = float(np.linalg.det(fim))
        return math.sqrt(max(det, 0.0))

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if d == 1:
                value, _ = integrate.quad(sqrt_det, *domain[0], limit=200)
            else:
                value, _ = integrate.nquad(lambda a, b: sqrt_det(a, b), list(domain))
        except (integrate.IntegrationWarning, ZeroDivisionError, OverflowError) as exc:
            raise DivergenceError(f"Jeffreys integral does not converge on {domain}: {exc}") from exc
    if not math.isfinite(value) or value <= 0.0:
        raise DivergenceError(f"Jeffreys integral is {value} on {domain}")
    return math.log(value)
