"""Observed and Monte-Carlo Fisher information of a network.

For the unit-variance Gaussian output model the Fisher information only
depends on the parameter-output Jacobians, so both the observed matrix and
the large-sample estimate are averages of ``J(x)^T J(x)``; they differ in
where the inputs come from.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InputError
from .linalg import eig_sym, psd_eigenvalues, sym_matrix
from .network import Dataset, NetworkSpec, jacobian

#: ``sampler(rng, n)`` returns ``n`` inputs as an ``(n, M_0)`` array.
InputSampler = Callable[[np.random.Generator, int], NDArray[np.float64]]

KINDS = ("observed", "true_estimate")
MAGIC = b"FISHMAT1"
_HEADER = struct.Struct("<8sQIQ")
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class FisherMatrix:
    """A ``D x D`` psd matrix tagged with how it was obtained.

    ``n_samples`` is ``N`` for the observed FIM and the Monte-Carlo input
    count for an estimate of the true FIM.
    """

    matrix: NDArray[np.float64]
    kind: str
    n_samples: int

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InputError(f"kind must be one of {KINDS}")
        object.__setattr__(self, "matrix", sym_matrix(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> NDArray[np.float64]:
        return psd_eigenvalues(self.matrix)

    # binary layout: magic, dim (u64), kind (u32), n_samples (u64), dim*dim little-endian f64
    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, self.dim, KINDS.index(self.kind), int(self.n_samples))
        return head + self.matrix.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, blob: bytes) -> "FisherMatrix":
        if len(blob) < _HEADER.size:
            raise InputError("truncated Fisher matrix file")
        magic, dim, kind, n = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise InputError("not a Fisher matrix file (bad magic)")
        body = blob[_HEADER.size :]
        if len(body) != 8 * dim * dim or kind >= len(KINDS):
            raise InputError("corrupt Fisher matrix file")
        mat = np.frombuffer(body, dtype="<f8").reshape(dim, dim)
        return cls(mat.astype(np.float64), KINDS[kind], int(n))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "FisherMatrix":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self) -> str:
        buf = io.StringIO()
        np.savetxt(buf, self.matrix, delimiter=",", fmt="%.17g")
        return buf.getvalue()


@dataclass(frozen=True)
class SignatureReport:
    """Rank split of a Fisher matrix at a threshold.

    ``signature`` is (positive, negative, zero); the negative count is always
    zero for a psd matrix.  Columns of ``screen_basis`` / ``radical_basis``
    are orthonormal eigenvectors of the kept / discarded eigenvalues.
    """

    d_local: int
    signature: tuple[int, int, int]
    threshold: float
    screen_basis: NDArray[np.float64]
    radical_basis: NDArray[np.float64]


def _jtj_mean(jac: NDArray[np.float64]) -> NDArray[np.float64]:
    n, m, d = jac.shape
    flat = jac.reshape(n * m, d)
    return flat.T @ flat / n


def observed_fim(spec: NetworkSpec, theta: ArrayLike, data: Dataset | ArrayLike) -> FisherMatrix:
    """``(1/N) sum_i J(x_i)^T J(x_i)`` over the dataset inputs.

    Targets play no part; a bare ``(N, M_0)`` input array is accepted too.
    """
    x = data.inputs if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=np.float64))
    jac = jacobian(spec, theta, x)
    return FisherMatrix(_jtj_mean(jac), "observed", x.shape[0])


def true_fim_estimate(
    spec: NetworkSpec,
    theta: ArrayLike,
    input_sampler: InputSampler,
    n_mc: int,
    seed: int = 0,
    chunk_size: int | None = None,
) -> FisherMatrix:
    """Monte-Carlo estimate of the Fisher information from ``n_mc`` fresh inputs.

    Inputs are drawn in chunks of ``chunk_size`` (default: one chunk), each
    from its own stream spawned from ``seed``, so the result is a pure
    function of ``(seed, chunk_size)``.
    """
    if n_mc < 1:
        raise InputError("n_mc must be >= 1")
    chunk = n_mc if chunk_size is None else max(1, int(chunk_size))
    n_chunks = -(-n_mc // chunk)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    d = spec.n_params
    acc = np.zeros((d, d))
    for i, ss in enumerate(streams):
        n_here = min(chunk, n_mc - i * chunk)
        x = np.asarray(input_sampler(np.random.default_rng(ss), n_here), dtype=np.float64)
        jac = jacobian(spec, theta, x.reshape(n_here, spec.input_dim))
        flat = jac.reshape(-1, d)
        acc += flat.T @ flat
    return FisherMatrix(acc / n_mc, "true_estimate", n_mc)


def local_dimensionality(f: FisherMatrix | ArrayLike, threshold: float) -> SignatureReport:
    """Count eigenvalues above ``threshold`` and split the eigenbasis accordingly."""
    if threshold < 0:
        raise InputError("threshold must be nonnegative")
    mat = f.matrix if isinstance(f, FisherMatrix) else sym_matrix(f)
    eig = eig_sym(mat)
    keep = eig.eigenvalues > threshold
    d_local = int(np.sum(keep))
    dim = mat.shape[0]
    return SignatureReport(
        d_local=d_local,
        signature=(d_local, 0, dim - d_local),
        threshold=float(threshold),
        screen_basis=eig.eigenvectors[:, keep],
        radical_basis=eig.eigenvectors[:, ~keep],
    )


def numerical_rank(f: FisherMatrix | ArrayLike, rtol: float = RANK_RTOL) -> int:
    """Number of eigenvalues above ``rtol * lambda_max``."""
    mat = f.matrix if isinstance(f, FisherMatrix) else sym_matrix(f)
    vals = psd_eigenvalues(mat)
    if vals[0] <= 0.0:
        return 0
    return int(np.sum(vals > rtol * vals[0]))


def rank_bound_check(f: FisherMatrix, m: int, n: int) -> bool:
    """Whether the observed rank obeys ``rank <= min(D, m * N)``."""
    if f.kind != "observed":
        raise InputError("rank bound applies to observed Fisher matrices")
    return numerical_rank(f) <= min(f.dim, m * n)


def projection_residual(basis: NDArray[np.float64], v: ArrayLike) -> float:
    """Relative distance from ``v`` to the span of the (orthonormal) columns of ``basis``."""
    v = np.asarray(v, dtype=np.float64).ravel()
    proj = basis @ (basis.T @ v) if basis.size else np.zeros_like(v)
    return float(np.linalg.norm(v - proj) / np.linalg.norm(v))


# --------------------------------------------------------------------------
# input samplers


def gaussian_inputs(dim: int, scale: float = 1.0) -> InputSampler:
    def sample(rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        return rng.normal(0.0, scale, size=(n, dim))

    return sample


def fixed_inputs(x: ArrayLike) -> InputSampler:
    x = np.asarray(x, dtype=np.float64).ravel()

    def sample(rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        return np.tile(x, (n, 1))

    return sample


def zero_inputs(dim: int) -> InputSampler:
    return fixed_inputs(np.zeros(dim))


def empirical_inputs(x: ArrayLike) -> InputSampler:
    """Resample rows of ``x`` with replacement."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))

    def sample(rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        return x[rng.integers(0, x.shape[0], size=n)]

    return sample
