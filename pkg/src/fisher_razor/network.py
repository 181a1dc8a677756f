"""Small feed-forward regression networks.

The model is ``y ~ N(f(x; theta), I_m)`` with

    h^l = W^l x^{l-1} + b^l,   x^l = phi(h^l)  (l < L),   f = h^L.

Parameters are flattened as ``vec(W^1), ..., vec(W^L), b^1, ..., b^L``
where ``vec`` stacks columns (Fortran order).  Jacobians are exact and
computed by reverse accumulation over a batch of inputs.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InputError, OptimizationError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh", "identity")
FORMAT_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a fully connected network.

    ``layer_widths`` is ``[M_0, ..., M_L]``; the activation is applied on
    hidden layers only.  ``bias=False`` drops every bias vector, which gives
    models whose Jacobian vanishes at ``x = 0``.
    """

    layer_widths: tuple[int, ...]
    activation: str = "tanh"
    seed: int = 0
    bias: bool = True

    def __post_init__(self) -> None:
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise InputError("layer_widths needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise InputError(f"all widths must be >= 1, got {widths}")
        if self.activation not in ACTIVATIONS:
            raise InputError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def weight_shapes(self) -> list[tuple[int, int]]:
        w = self.layer_widths
        return [(w[l + 1], w[l]) for l in range(self.n_layers)]

    @property
    def n_params(self) -> int:
        n = sum(r * c for r, c in self.weight_shapes)
        if self.bias:
            n += sum(self.layer_widths[1:])
        return n

    @property
    def is_linear_in_params(self) -> bool:
        """Single layer: outputs are linear in theta, so the FIM does not depend on theta."""
        return self.n_layers == 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "layer_widths": list(self.layer_widths),
            "activation": self.activation,
            "seed": int(self.seed),
            "bias": bool(self.bias),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NetworkSpec":
        return cls(
            layer_widths=tuple(d["layer_widths"]),
            activation=d.get("activation", "tanh"),
            seed=int(d.get("seed", 0)),
            bias=bool(d.get("bias", True)),
        )


@dataclass(frozen=True)
class Dataset:
    """``N`` input/target pairs stored as ``(N, M_0)`` and ``(N, m)`` arrays."""

    inputs: NDArray[np.float64]
    targets: NDArray[np.float64]

    def __post_init__(self) -> None:
        x = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        y = np.asarray(self.targets, dtype=np.float64)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if x.shape[0] != y.shape[0]:
            raise InputError(f"{x.shape[0]} inputs but {y.shape[0]} targets")
        if x.shape[0] < 1:
            raise InputError("dataset must contain at least one sample")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError("dataset has non-finite entries")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def _act(name: str, h: NDArray) -> NDArray:
    if name == "tanh":
        return np.tanh(h)
    if name == "relu":
        return np.maximum(h, 0.0)
    return h


def _act_deriv(name: str, h: NDArray) -> NDArray:
    if name == "tanh":
        return 1.0 - np.tanh(h) ** 2
    if name == "relu":
        # subgradient 0 at the kink
        return (h > 0.0).astype(np.float64)
    return np.ones_like(h)


def _check_theta(spec: NetworkSpec, theta: ArrayLike) -> NDArray[np.float64]:
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.shape[0] != spec.n_params:
        raise InputError(f"theta has length {theta.shape[0]}, spec needs {spec.n_params}")
    return theta


def _check_inputs(spec: NetworkSpec, x: ArrayLike) -> tuple[NDArray[np.float64], bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise InputError(f"inputs must have {spec.input_dim} columns, got shape {x.shape}")
    return x, single


def unflatten(spec: NetworkSpec, theta: ArrayLike) -> tuple[list[NDArray], list[NDArray]]:
    """Split a flat parameter vector into weight matrices and bias vectors."""
    theta = _check_theta(spec, theta)
    weights, biases = [], []
    off = 0
    for rows, cols in spec.weight_shapes:
        weights.append(theta[off : off + rows * cols].reshape((rows, cols), order="F"))
        off += rows * cols
    for rows, _ in spec.weight_shapes:
        if spec.bias:
            biases.append(theta[off : off + rows])
            off += rows
        else:
            biases.append(np.zeros(rows))
    return weights, biases


def flatten(spec: NetworkSpec, weights: Sequence[ArrayLike], biases: Sequence[ArrayLike] | None = None) -> NDArray[np.float64]:
    """Inverse of :func:`unflatten`."""
    parts = []
    for w, shape in zip(weights, spec.weight_shapes):
        w = np.asarray(w, dtype=np.float64)
        if w.shape != shape:
            raise InputError(f"weight of shape {w.shape}, expected {shape}")
        parts.append(w.ravel(order="F"))
    if spec.bias:
        if biases is None:
            biases = [np.zeros(r) for r, _ in spec.weight_shapes]
        for b, (rows, _) in zip(biases, spec.weight_shapes):
            b = np.asarray(b, dtype=np.float64).ravel()
            if b.shape[0] != rows:
                raise InputError(f"bias of length {b.shape[0]}, expected {rows}")
            parts.append(b)
    return np.concatenate(parts)


def init_params(spec: NetworkSpec) -> NDArray[np.float64]:
    """Gaussian weights with variance 1/fan-in, zero biases, seeded by ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    weights = [rng.normal(0.0, 1.0 / math.sqrt(cols), size=(rows, cols)) for rows, cols in spec.weight_shapes]
    return flatten(spec, weights)


def _forward_pass(spec: NetworkSpec, weights, biases, x: NDArray) -> tuple[list[NDArray], list[NDArray]]:
    xs, hs = [x], []
    for l, (w, b) in enumerate(zip(weights, biases)):
        h = xs[-1] @ w.T + b
        hs.append(h)
        xs.append(_act(spec.activation, h) if l < spec.n_layers - 1 else h)
    return xs, hs


def forward(spec: NetworkSpec, theta: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
    """Network output for one input ``(M_0,)`` or a batch ``(N, M_0)``."""
    weights, biases = unflatten(spec, theta)
    x, single = _check_inputs(spec, x)
    y = _forward_pass(spec, weights, biases, x)[0][-1]
    return y[0] if single else y


def jacobian(spec: NetworkSpec, theta: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
    """Parameter-output Jacobian ``dy/dtheta``.

    Returns shape ``(m, D)`` for a single input and ``(N, m, D)`` for a batch.
    """
    weights, biases = unflatten(spec, theta)
    x, single = _check_inputs(spec, x)
    xs, hs = _forward_pass(spec, weights, biases, x)
    n, m = x.shape[0], spec.output_dim
    delta = np.broadcast_to(np.eye(m), (n, m, m))
    w_blocks: list[NDArray] = [None] * spec.n_layers  # type: ignore[list-item]
    b_blocks: list[NDArray] = [None] * spec.n_layers  # type: ignore[list-item]
    for l in range(spec.n_layers - 1, -1, -1):
        # delta[n, k, i] = d y_k / d h^l_i ; vec() index of W[i, j] is j * rows + i
        gw = delta[:, :, None, :] * xs[l][:, None, :, None]
        w_blocks[l] = gw.reshape(n, m, -1)
        b_blocks[l] = delta
        if l > 0:
            delta = (delta @ weights[l]) * _act_deriv(spec.activation, hs[l - 1])[:, None, :]
    blocks = w_blocks + (b_blocks if spec.bias else [])
    jac = np.concatenate(blocks, axis=2)
    return jac[0] if single else jac


def log_likelihood(spec: NetworkSpec, theta: ArrayLike, data: Dataset) -> float:
    """``sum_i log N(y_i | f(x_i), I)``."""
    resid = data.targets - forward(spec, theta, data.inputs)
    n, m = resid.shape
    return float(-0.5 * n * m * LOG_2PI - 0.5 * np.sum(resid**2))


def log_likelihood_grad(spec: NetworkSpec, theta: ArrayLike, data: Dataset) -> NDArray[np.float64]:
    """Gradient of :func:`log_likelihood`, i.e. ``sum_i J_i^T (y_i - f(x_i))``."""
    weights, biases = unflatten(spec, theta)
    x, _ = _check_inputs(spec, data.inputs)
    xs, hs = _forward_pass(spec, weights, biases, x)
    delta = data.targets - xs[-1]
    gw: list[NDArray] = [None] * spec.n_layers  # type: ignore[list-item]
    gb: list[NDArray] = [None] * spec.n_layers  # type: ignore[list-item]
    for l in range(spec.n_layers - 1, -1, -1):
        gw[l] = (delta.T @ xs[l]).ravel(order="F")
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ weights[l]) * _act_deriv(spec.activation, hs[l - 1])
    return np.concatenate(gw + (gb if spec.bias else []))


def forward_many(spec: NetworkSpec, thetas: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
    """Outputs for ``K`` parameter vectors at once: ``(K, D)`` -> ``(K, N, m)``."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    if thetas.shape[1] != spec.n_params:
        raise InputError(f"thetas have {thetas.shape[1]} columns, spec needs {spec.n_params}")
    x, _ = _check_inputs(spec, x)
    k = thetas.shape[0]
    off = 0
    ws = []
    for rows, cols in spec.weight_shapes:
        ws.append(thetas[:, off : off + rows * cols].reshape(k, cols, rows).transpose(0, 2, 1))
        off += rows * cols
    cur = np.broadcast_to(x, (k,) + x.shape)
    for l, (rows, _) in enumerate(spec.weight_shapes):
        h = np.einsum("knj,kij->kni", cur, ws[l])
        if spec.bias:
            h = h + thetas[:, None, off : off + rows]
            off += rows
        cur = _act(spec.activation, h) if l < spec.n_layers - 1 else h
    return cur


def log_likelihood_many(spec: NetworkSpec, thetas: ArrayLike, data: Dataset, chunk: int = 4096) -> NDArray[np.float64]:
    """:func:`log_likelihood` evaluated at each row of ``thetas``."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    n, m = data.targets.shape
    out = np.empty(thetas.shape[0])
    for start in range(0, thetas.shape[0], chunk):
        pred = forward_many(spec, thetas[start : start + chunk], data.inputs)
        sq = np.sum((pred - data.targets) ** 2, axis=(1, 2))
        out[start : start + chunk] = -0.5 * n * m * LOG_2PI - 0.5 * sq
    return out


# --------------------------------------------------------------------------
# fitting


@dataclass
class FitConfig:
    """Settings for :func:`fit_mle`.

    ``method="gd"`` is full-batch gradient ascent on the log-likelihood with
    a Barzilai-Borwein trial step and Armijo backtracking; ``"lm"`` is
    Levenberg-Marquardt on the residuals, much faster on small nets.
    """

    method: str = "gd"
    tol: float = 1e-6
    max_iter: int = 20000
    armijo: float = 1e-4


@dataclass
class FitResult:
    theta: NDArray[np.float64]
    converged: bool
    n_iter: int
    grad_norm: float
    log_lik: float
    reason: str = field(default="")


def _fit_gd(spec, data, theta, cfg: FitConfig) -> FitResult:
    f = log_likelihood(spec, theta, data)
    g = log_likelihood_grad(spec, theta, data)
    step = 1.0 / max(1.0, float(np.max(np.abs(g))))
    prev = None
    for it in range(cfg.max_iter):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= cfg.tol:
            return FitResult(theta, True, it, gnorm, f, "gradient tolerance reached")
        if prev is not None:
            s, y = theta - prev[0], prev[1] - g
            sy = float(s @ y)
            if sy > 0:
                step = float(s @ s) / sy
        gg = float(g @ g)
        while True:
            trial = theta + step * g
            f_trial = log_likelihood(spec, trial, data)
            if np.isfinite(f_trial) and f_trial >= f + cfg.armijo * step * gg:
                break
            step *= 0.5
            if step < 1e-30:
                return FitResult(theta, False, it, gnorm, f, "line search failed")
        prev = (theta, g)
        theta, f = trial, f_trial
        g = log_likelihood_grad(spec, theta, data)
        if not np.all(np.isfinite(g)):
            raise OptimizationError("gradient became non-finite")
    gnorm = float(np.max(np.abs(g)))
    return FitResult(theta, gnorm <= cfg.tol, cfg.max_iter, gnorm, f, "iteration cap")


def _fit_lm(spec, data, theta, cfg: FitConfig) -> FitResult:
    mu = 1e-3
    f = log_likelihood(spec, theta, data)
    d = spec.n_params
    for it in range(cfg.max_iter):
        jac = jacobian(spec, theta, data.inputs).reshape(-1, d)
        resid = (data.targets - forward(spec, theta, data.inputs)).ravel()
        g = jac.T @ resid
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= cfg.tol:
            return FitResult(theta, True, it, gnorm, f, "gradient tolerance reached")
        jtj = jac.T @ jac
        while True:
            # scale-invariant damping on the diagonal, floor keeps it definite
            damp = mu * (np.diag(jtj) + 1e-12 * max(1.0, float(np.trace(jtj)) / d))
            step = np.linalg.solve(jtj + np.diag(damp), g)
            trial = theta + step
            f_trial = log_likelihood(spec, trial, data)
            if np.isfinite(f_trial) and f_trial >= f:
                mu = max(mu / 3.0, 1e-12)
                break
            mu *= 4.0
            if mu > 1e16:
                return FitResult(theta, False, it, gnorm, f, "damping exhausted")
        theta, f = trial, f_trial
    g = log_likelihood_grad(spec, theta, data)
    gnorm = float(np.max(np.abs(g)))
    return FitResult(theta, gnorm <= cfg.tol, cfg.max_iter, gnorm, f, "iteration cap")


def fit_mle(
    spec: NetworkSpec,
    data: Dataset,
    config: FitConfig | None = None,
    theta0: ArrayLike | None = None,
) -> FitResult:
    """Maximize the Gaussian log-likelihood.

    Starts from ``theta0`` or :func:`init_params`.  Terminates when the
    gradient sup-norm is at most ``config.tol`` or the iteration cap is
    hit; :attr:`FitResult.reason` says which.  Raises
    :class:`OptimizationError` if the loss is non-finite at the start or
    the iterate blows up.
    """
    cfg = config or FitConfig()
    theta = init_params(spec) if theta0 is None else _check_theta(spec, theta0).copy()
    if not np.isfinite(log_likelihood(spec, theta, data)):
        raise OptimizationError("log-likelihood is not finite at the starting point")
    if cfg.method == "gd":
        res = _fit_gd(spec, data, theta, cfg)
    elif cfg.method == "lm":
        res = _fit_lm(spec, data, theta, cfg)
    else:
        raise InputError(f"unknown fit method {cfg.method!r}")
    if not np.all(np.isfinite(res.theta)) or not np.isfinite(res.log_lik):
        raise OptimizationError("fit diverged")
    if not res.converged:
        logger.warning("fit_mle stopped without converging: %s (|grad|=%.2e)", res.reason, res.grad_norm)
    return res


# --------------------------------------------------------------------------
# serialization


def network_to_json(spec: NetworkSpec, theta: ArrayLike | None = None) -> str:
    doc: dict[str, Any] = {"format": FORMAT_VERSION, "spec": spec.to_dict()}
    if theta is not None:
        doc["theta"] = [float(v) for v in _check_theta(spec, theta)]
    return json.dumps(doc)


def network_from_json(text: str) -> tuple[NetworkSpec, NDArray[np.float64] | None]:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_VERSION:
        raise InputError(f"unsupported network format {doc.get('format')!r}")
    spec = NetworkSpec.from_dict(doc["spec"])
    theta = doc.get("theta")
    return spec, (None if theta is None else _check_theta(spec, theta))
