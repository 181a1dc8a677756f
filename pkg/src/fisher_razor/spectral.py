"""Fisher spectra, large-dimension log-determinants and Marchenko-Pastur.

The simplified razor replaces ``1/2 log|I + s Id|`` by ``(D/2)`` times the
average of ``log(lambda + s)`` under the spectral density, where
``s = 1/(N eps2^2)``.  Here that density is always the empirical spectrum
of a concrete matrix, or a fitted Marchenko-Pastur law.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, stats

from .errors import InputError
from .fim import FisherMatrix
from .linalg import eig_sym, sym_matrix
from .prior import PriorConfig

#: ``sampler(rng, d)`` returns a random ``(d, d)`` psd matrix.
MatrixSampler = Callable[[np.random.Generator, int], NDArray[np.float64]]


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues (descending, clamped at 0) with a histogram and two moments."""

    eigenvalues: NDArray[np.float64]
    bin_edges: NDArray[np.float64]
    counts: NDArray[np.int64]
    m1: float
    m2: float

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def mean_log_shifted(self, s: float) -> float:
        """Average of ``log(lambda_i + s)``."""
        return float(np.mean(np.log(self.eigenvalues + s)))

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        buf.write("bin_left,bin_right,count\n")
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            buf.write(f"{float(lo)!r},{float(hi)!r},{int(c)}\n")
        return buf.getvalue()

    def moments_json(self) -> str:
        return json.dumps({"dim": self.dim, "m1": self.m1, "m2": self.m2,
                           "lambda_max": float(self.eigenvalues[0])})


def spectrum_of(f: FisherMatrix | ArrayLike, n_bins: int = 30) -> Spectrum:
    """Spectrum of a Fisher matrix, histogrammed over ``[0, lambda_max]``.

    Eigenvalues down to ``-1e-8 * lambda_max`` are clamped to zero; anything
    more negative is rejected.
    """
    if n_bins < 1:
        raise InputError("n_bins must be >= 1")
    mat = f.matrix if isinstance(f, FisherMatrix) else sym_matrix(f)
    vals = eig_sym(mat).eigenvalues
    top = max(float(vals[0]), 0.0)
    if vals[-1] < -1e-8 * max(top, 1e-300) and vals[-1] < -1e-300:
        raise InputError(f"matrix is not psd (eigenvalue {vals[-1]:.3e})")
    vals = np.maximum(vals, 0.0)
    counts, edges = np.histogram(vals, bins=n_bins, range=(0.0, top if top > 0 else 1.0))
    return Spectrum(vals, edges, counts, float(np.mean(vals)), float(np.mean(vals**2)))


class LimitRow(NamedTuple):
    d: int
    mean_logdet: float
    gap: float
    rel_gap: float


def logdet_limit_check(
    sampler: MatrixSampler,
    dims: Sequence[int],
    b: float,
    rho_integral: float,
    n_draws: int = 10,
    seed: int = 0,
) -> list[LimitRow]:
    """Compare ``(1/d) log|A_d + b I|`` with its limiting spectral integral.

    For each ``d`` the normalized log-determinant is averaged over
    ``n_draws`` matrices from ``sampler``.  ``rel_gap`` divides by
    ``|rho_integral|`` (or 1 if that is zero).  Use :func:`limit_converges`
    on the result for the shrinking-gap check.
    """
    if b < 0:
        raise InputError("b must be nonnegative")
    if list(dims) != sorted(dims):
        raise InputError("dims must be increasing")
    rows = []
    streams = np.random.SeedSequence(seed).spawn(len(dims))
    denom = abs(rho_integral) if rho_integral != 0 else 1.0
    for d, ss in zip(dims, streams):
        rng = np.random.default_rng(ss)
        vals = []
        for _ in range(n_draws):
            lam = np.maximum(np.linalg.eigvalsh(sampler(rng, d)), 0.0)
            with np.errstate(divide="ignore"):
                vals.append(float(np.mean(np.log(lam + b))))
        mean = float(np.mean(vals))
        gap = abs(mean - rho_integral)
        rows.append(LimitRow(int(d), mean, gap, gap / denom))
    return rows


def limit_converges(rows: Sequence[LimitRow]) -> bool:
    return rows[-1].gap < rows[0].gap


def wishart_sampler(aspect: float = 1.0, scale: float = 1.0) -> MatrixSampler:
    """``A = scale * X X^T / n`` with ``X`` a ``d x n`` standard Gaussian, ``n = round(d / aspect)``."""

    def sample(rng: np.random.Generator, d: int) -> NDArray[np.float64]:
        n = max(1, int(round(d / aspect)))
        x = rng.standard_normal((d, n))
        return scale * (x @ x.T) / n

    return sample


# --------------------------------------------------------------------------
# razor approximations


def simplified_razor(neg_log_lik: float, d: int, n: int, spectrum: Spectrum, config: PriorConfig) -> float:
    """``-log p + (D/2) log N + (D/2) mean_i log(lambda_i + 1/(N eps2^2))``."""
    s = 1.0 / (n * config.eps2**2)
    return neg_log_lik + 0.5 * d * math.log(n) + 0.5 * d * spectrum.mean_log_shifted(s)


def taylor_log_moment(m1: float, m2: float, s: float) -> float:
    """Second-order expansion of ``E log(lambda + s)`` around the mean ``m1``."""
    if m1 + s <= 0:
        raise InputError("m1 + s must be positive")
    return math.log(m1 + s) - (m2 - m1**2) / (2.0 * (m1 + s) ** 2)


class MomentRazor(NamedTuple):
    expansion: float
    closed_form: float


def taylor_moment_razor(
    neg_log_lik: float, d: int, n: int, m1: float, m2: float, config: PriorConfig, c3: float
) -> MomentRazor:
    """Razor from the first two spectral moments.

    ``expansion`` puts :func:`taylor_log_moment` into the simplified razor;
    ``closed_form`` is ``-log p + (D/2) log N - c3 D / (m1 + s)^2`` where the
    mean eigenvalue ``m1`` stands for ``C1 / M``.
    """
    if c3 <= 0:
        raise InputError("c3 must be positive")
    s = 1.0 / (n * config.eps2**2)
    head = neg_log_lik + 0.5 * d * math.log(n)
    return MomentRazor(
        expansion=head + 0.5 * d * taylor_log_moment(m1, m2, s),
        closed_form=head - c3 * d / (m1 + s) ** 2,
    )


# --------------------------------------------------------------------------
# Marchenko-Pastur


@dataclass(frozen=True)
class MPDensity:
    """Marchenko-Pastur law with ratio ``shape = d/n`` and variance ``scale``.

    For ``shape > 1`` a point mass ``1 - 1/shape`` sits at the origin; the
    continuous part lives on ``[scale (1 - sqrt q)^2, scale (1 + sqrt q)^2]``.
    """

    shape: float
    scale: float
    atom_mass: float

    @property
    def support(self) -> tuple[float, float]:
        r = math.sqrt(self.shape)
        return self.scale * (1.0 - r) ** 2, self.scale * (1.0 + r) ** 2

    def pdf(self, lam: ArrayLike) -> NDArray[np.float64]:
        """Density of the continuous part."""
        lam = np.asarray(lam, dtype=np.float64)
        lo, hi = self.support
        inside = (lam > lo) & (lam < hi) & (lam > 0)
        out = np.zeros_like(lam)
        li = lam[inside]
        out[inside] = np.sqrt((hi - li) * (li - lo)) / (2.0 * math.pi * self.scale * self.shape * li)
        return out

    def _weighted_quad(self, g: Callable[[float], float], upper: float | None = None) -> float:
        # write the density as (l - lo)^a (hi - l)^(1/2) * smooth part so quad
        # can absorb the edge singularities through an algebraic weight
        lo, hi = self.support
        if math.isclose(self.shape, 1.0):
            wvar, smooth = (-0.5, 0.5), lambda l: g(l) / (2.0 * math.pi * self.scale)
        else:
            wvar, smooth = (0.5, 0.5), lambda l: g(l) / (2.0 * math.pi * self.scale * self.shape * l)
        top = hi if upper is None else min(max(upper, lo), hi)
        if top <= lo:
            return 0.0
        if upper is None:
            val, _ = integrate.quad(smooth, lo, hi, weight="alg", wvar=wvar, limit=200)
        else:
            # cdf pieces: the upper endpoint is interior, keep only the lower weight
            a = wvar[0]
            val, _ = integrate.quad(
                lambda l: smooth(l) * (hi - l) ** 0.5, lo, top, weight="alg", wvar=(a, 0.0), limit=200
            )
        return float(val)

    def continuous_mass(self) -> float:
        return self._weighted_quad(lambda l: 1.0)

    def expect(self, fn: Callable[[float], float]) -> float:
        """``E[fn(lambda)]`` including the atom."""
        atom = self.atom_mass * fn(0.0) if self.atom_mass > 0 else 0.0
        return atom + self._weighted_quad(fn)

    def cdf(self, lam: ArrayLike) -> NDArray[np.float64]:
        lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
        out = np.empty_like(lam)
        for i, x in enumerate(lam):
            if x < 0:
                out[i] = 0.0
            else:
                out[i] = min(1.0, self.atom_mass + self._weighted_quad(lambda l: 1.0, upper=float(x)))
        return out


def mp_density(aspect: float, scale: float = 1.0) -> MPDensity:
    if aspect <= 0 or scale <= 0:
        raise InputError("aspect and scale must be positive")
    return MPDensity(float(aspect), float(scale), max(0.0, 1.0 - 1.0 / aspect))


def fit_mp(spectrum: Spectrum | ArrayLike, aspect: float) -> MPDensity:
    """Marchenko-Pastur law whose mean matches the empirical first moment."""
    m1 = spectrum.m1 if isinstance(spectrum, Spectrum) else float(np.mean(spectrum))
    return mp_density(aspect, m1)


def ks_distance(eigenvalues: ArrayLike, density: MPDensity) -> float:
    """Kolmogorov-Smirnov statistic of the eigenvalues against ``density``."""
    vals = np.asarray(eigenvalues, dtype=np.float64)
    return float(stats.kstest(vals, density.cdf).statistic)


def mp_log_integral(density: MPDensity, b: float) -> float:
    """``int rho(lambda) log(lambda + b) dlambda`` for the full law, atom included."""
    if b <= 0:
        raise InputError("b must be positive")
    return density.expect(lambda l: math.log(l + b))


def network_mp_shape(n_layers: int, width: int) -> float:
    """Wishart shape ``D/M ~ L M`` for a depth-``L`` width-``M`` network."""
    return float(n_layers * width)


def mp_third_term(density: MPDensity, d: int, n: int, config: PriorConfig) -> float:
    """``(D/2) E log(lambda + 1/(N eps2^2))`` under a Marchenko-Pastur spectrum.

    The atom contributes ``log(1/(N eps2^2)) = -log N - 2 log eps2``.
    """
    return 0.5 * d * mp_log_integral(density, 1.0 / (n * config.eps2**2))
