"""Penalized regression splines for identity-link additive models."""

from hfseason.gam.basis import (
    CUBIC_REGRESSION,
    P_SPLINE,
    CubicRegressionSpline,
    DesignBlock,
    PSpline,
    absorb_sum_to_zero,
    cubic_regression_basis,
    difference_matrix,
    pspline_basis,
)
from hfseason.gam.fitting import (
    GamFit,
    LambdaSearch,
    PenalizedDesign,
    fit_penalized_ls,
    gcv_score,
    predict_with_bands,
    r_squared,
    select_lambda,
)

__all__ = [
    "CUBIC_REGRESSION", "P_SPLINE", "CubicRegressionSpline", "DesignBlock", "PSpline",
    "absorb_sum_to_zero", "cubic_regression_basis", "difference_matrix", "pspline_basis",
    "GamFit", "LambdaSearch", "PenalizedDesign", "fit_penalized_ls", "gcv_score",
    "predict_with_bands", "r_squared", "select_lambda",
]
