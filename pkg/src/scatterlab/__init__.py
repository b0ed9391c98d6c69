"""Scatter functionals and empirical checks of the covariance matrix's defining properties."""
from .core import Sample, SpdMatrix, frobenius_distance, mahalanobis_distances, spd_inverse
from .distributions import (
    Affine,
    Elliptical,
    IndependentSum,
    Marginal,
    Product,
    Radial,
    StandardNormal,
    StandardizedSum,
    child_seed,
    gaussian,
    product,
    sample,
    standardized_sum_spec,
    true_covariance,
)
from .scatter import (
    ScatterEstimate,
    ScatterSpec,
    Weight,
    calibrate_gaussian,
    cov,
    cov4,
    evaluate,
    gaussian_constant,
    m_scatter,
    mcd,
    symmetrize,
    tyler_shape,
)

__version__ = "0.1.0"
