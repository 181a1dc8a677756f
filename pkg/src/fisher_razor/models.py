"""Statistical models the razor machinery can be evaluated on.

A model exposes ``n_params``, ``n_obs(data)``, ``log_likelihood``,
``log_likelihood_many`` (rows of a ``(K, D)`` array), ``gradient``,
``observed_fim`` and ``true_fim``.  :class:`NetworkModel` wraps a
feed-forward network; the scalar models are regular one-parameter families
used where Jeffreys' prior has a finite normalizer or a conjugate closed
form exists.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InputError
from .fim import InputSampler, gaussian_inputs, observed_fim
from .network import (
    LOG_2PI,
    Dataset,
    NetworkSpec,
    log_likelihood,
    log_likelihood_grad,
    log_likelihood_many,
)


class NetworkModel:
    """Network with a fixed Monte-Carlo input set for the true FIM.

    The ``n_fim_inputs`` inputs are drawn once from ``input_sampler`` with
    ``seed`` and reused at every theta (common random numbers), so
    ``true_fim`` is a deterministic function of theta.  For single-layer
    networks the FIM does not depend on theta and is computed once.
    """

    def __init__(
        self,
        spec: NetworkSpec,
        input_sampler: InputSampler | None = None,
        n_fim_inputs: int = 1000,
        seed: int = 0,
    ):
        if n_fim_inputs < 1:
            raise InputError("n_fim_inputs must be >= 1")
        self.spec = spec
        sampler = input_sampler or gaussian_inputs(spec.input_dim)
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        self.fim_inputs = np.asarray(sampler(rng, n_fim_inputs), dtype=np.float64).reshape(
            n_fim_inputs, spec.input_dim
        )
        self._const_fim: NDArray[np.float64] | None = None

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    def n_obs(self, data: Dataset) -> int:
        return data.n

    def log_likelihood(self, theta: ArrayLike, data: Dataset) -> float:
        return log_likelihood(self.spec, theta, data)

    def log_likelihood_many(self, thetas: ArrayLike, data: Dataset) -> NDArray[np.float64]:
        return log_likelihood_many(self.spec, thetas, data)

    def gradient(self, theta: ArrayLike, data: Dataset) -> NDArray[np.float64]:
        return log_likelihood_grad(self.spec, theta, data)

    def observed_fim(self, theta: ArrayLike, data: Dataset) -> NDArray[np.float64]:
        return observed_fim(self.spec, theta, data).matrix

    def true_fim(self, theta: ArrayLike) -> NDArray[np.float64]:
        if self.spec.is_linear_in_params:
            if self._const_fim is None:
                self._const_fim = observed_fim(self.spec, np.zeros(self.n_params), self.fim_inputs).matrix
            return self._const_fim
        return observed_fim(self.spec, theta, self.fim_inputs).matrix

    def true_fim_many(self, thetas: ArrayLike) -> NDArray[np.float64]:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        if self.spec.is_linear_in_params:
            return np.broadcast_to(self.true_fim(thetas[0]), (thetas.shape[0],) + (self.n_params,) * 2)
        return np.stack([self.true_fim(t) for t in thetas])


class _ScalarModel:
    """Shared plumbing for one-parameter models on a 1-D observation array."""

    n_params = 1

    def _y(self, data: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(data, dtype=np.float64).ravel()

    def n_obs(self, data: ArrayLike) -> int:
        return self._y(data).shape[0]

    def log_likelihood(self, theta: ArrayLike, data: ArrayLike) -> float:
        return float(self.log_likelihood_many(np.reshape(theta, (1, 1)), data)[0])

    def true_fim(self, theta: ArrayLike) -> NDArray[np.float64]:
        return self.true_fim_many(np.reshape(theta, (1, 1)))[0]


class GaussianMeanModel(_ScalarModel):
    """``y_i ~ N(theta, 1)``; Fisher information is identically 1."""

    def log_likelihood_many(self, thetas: ArrayLike, data: ArrayLike) -> NDArray[np.float64]:
        y = self._y(data)
        t = np.asarray(thetas, dtype=np.float64).reshape(-1)
        n = y.shape[0]
        sq = np.sum(y**2) - 2.0 * t * np.sum(y) + n * t**2
        return -0.5 * n * LOG_2PI - 0.5 * sq

    def gradient(self, theta: ArrayLike, data: ArrayLike) -> NDArray[np.float64]:
        y = self._y(data)
        return np.array([np.sum(y - float(np.ravel(theta)[0]))])

    def observed_fim(self, theta: ArrayLike, data: ArrayLike) -> NDArray[np.float64]:
        return np.ones((1, 1))

    def true_fim_many(self, thetas: ArrayLike) -> NDArray[np.float64]:
        k = np.asarray(thetas).reshape(-1).shape[0]
        return np.ones((k, 1, 1))

    def mle(self, data: ArrayLike) -> NDArray[np.float64]:
        return np.array([float(np.mean(self._y(data)))])


class SaturatingMeanModel(_ScalarModel):
    """``y_i ~ N(A tanh(theta / s), 1)``.

    The Fisher information ``(A/s)^2 sech^4(theta/s)`` is positive everywhere
    and decays exponentially, so Jeffreys' normalizer over the real line is
    finite and equals ``2A``.
    """

    def __init__(self, amplitude: float = 80.0, scale: float = 40.0):
        if amplitude <= 0 or scale <= 0:
            raise InputError("amplitude and scale must be positive")
        self.amplitude = float(amplitude)
        self.scale = float(scale)

    def mean(self, theta: ArrayLike) -> NDArray[np.float64]:
        return self.amplitude * np.tanh(np.asarray(theta, dtype=np.float64) / self.scale)

    def slope(self, theta: ArrayLike) -> NDArray[np.float64]:
        return (self.amplitude / self.scale) / np.cosh(np.asarray(theta, dtype=np.float64) / self.scale) ** 2

    def log_likelihood_many(self, thetas: ArrayLike, data: ArrayLike) -> NDArray[np.float64]:
        y = self._y(data)
        mu = self.mean(np.asarray(thetas, dtype=np.float64).reshape(-1))
        n = y.shape[0]
        sq = np.sum(y**2) - 2.0 * mu * np.sum(y) + n * mu**2
        return -0.5 * n * LOG_2PI - 0.5 * sq

    def gradient(self, theta: ArrayLike, data: ArrayLike) -> NDArray[np.float64]:
        y = self._y(data)
        t = float(np.ravel(theta)[0])
        return np.array([float(np.sum(y - self.mean(t)) * self.slope(t))])

    def observed_fim(self, theta: ArrayLike, data: ArrayLike) -> NDArray[np.float64]:
        # outer-product (Gauss-Newton) form, as for networks
        return np.array([[float(self.slope(float(np.ravel(theta)[0]))) ** 2]])

    def true_fim_many(self, thetas: ArrayLike) -> NDArray[np.float64]:
        s = self.slope(np.asarray(thetas, dtype=np.float64).reshape(-1))
        return (s**2)[:, None, None]

    def mle(self, data: ArrayLike) -> NDArray[np.float64]:
        ybar = float(np.mean(self._y(data)))
        if abs(ybar) >= self.amplitude:
            raise InputError("sample mean outside the model's range; no finite mle")
        return np.array([self.scale * math.atanh(ybar / self.amplitude)])


class BernoulliModel(_ScalarModel):
    """Coin flips ``y_i in {0, 1}`` with success probability ``p = theta``."""

    def log_likelihood_many(self, thetas: ArrayLike, data: ArrayLike) -> NDArray[np.float64]:
        y = self._y(data)
        k, n = float(np.sum(y)), y.shape[0]
        p = np.asarray(thetas, dtype=np.float64).reshape(-1)
        out = np.full(p.shape, -np.inf)
        ok = (p > 0) & (p < 1)
        out[ok] = k * np.log(p[ok]) + (n - k) * np.log1p(-p[ok])
        return out

    def gradient(self, theta: ArrayLike, data: ArrayLike) -> NDArray[np.float64]:
        y = self._y(data)
        p = float(np.ravel(theta)[0])
        k, n = float(np.sum(y)), y.shape[0]
        return np.array([k / p - (n - k) / (1 - p)])

    def observed_fim(self, theta: ArrayLike, data: ArrayLike) -> NDArray[np.float64]:
        y = self._y(data)
        p = float(np.ravel(theta)[0])
        k, n = float(np.sum(y)), y.shape[0]
        return np.array([[(k / p**2 + (n - k) / (1 - p) ** 2) / n]])

    def true_fim_many(self, thetas: ArrayLike) -> NDArray[np.float64]:
        p = np.asarray(thetas, dtype=np.float64).reshape(-1)
        return (1.0 / (p * (1.0 - p)))[:, None, None]

    def mle(self, data: ArrayLike) -> NDArray[np.float64]:
        return np.array([float(np.mean(self._y(data)))])


def true_fim_many(model, thetas: ArrayLike) -> NDArray[np.float64]:
    """Stack of true FIMs at each row of ``thetas``, looping if the model has no batched form."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    batched = getattr(model, "true_fim_many", None)
    if batched is not None:
        return np.asarray(batched(thetas))
    return np.stack([np.asarray(model.true_fim(t)) for t in thetas])
