"""Minimum-description-length razor for small feed-forward networks.

Builds observed and Monte-Carlo Fisher information matrices, the
bi-parametric prior volume, Laplace terms and spectral approximations of
the razor, with numerical checks of the accompanying bounds.
"""

from .errors import DivergenceError, InputError, OptimizationError, PrecisionError, SingularShiftError
from .fim import FisherMatrix, SignatureReport, local_dimensionality, observed_fim, rank_bound_check, true_fim_estimate
from .linalg import EigenDecomposition, eig_sym, log_det_shifted, quadratic_form
from .network import Dataset, FitConfig, NetworkSpec, fit_mle, forward, init_params, jacobian, log_likelihood
from .prior import PriorConfig, VolumeEstimate, log_unnormalized_prior, log_volume_mc, volume_bounds
from .razor import (
    RazorReport,
    RazorSettings,
    balasubramanian_razor,
    bic,
    laplace_gaussian_integral,
    marginal_code_length_quadrature,
    razor,
    remainder_bound_check,
    remainder_term,
)
from .spectral import Spectrum, mp_density, simplified_razor, spectrum_of, taylor_moment_razor

__version__ = "0.1.0"
