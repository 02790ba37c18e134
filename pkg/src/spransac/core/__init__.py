"""领域类型、残差与异常。"""

from .errors import (
    ConfigurationError,
    DataError,
    DegenerateConfigurationError,
    NumericalError,
    PreconditionError,
    SpransacError,
)
from .residuals import (
    epipolar_residuals,
    homography_residuals,
    model_residuals,
    radial_residuals,
    residual_epipolar,
    residual_homography,
    residual_radial,
    sampson_residuals,
)
from .types import (
    Aabb2,
    Correspondence,
    CorrespondenceSet,
    EssentialSetup,
    FundamentalMatrix,
    Homography,
    Model,
    ModelFamily,
    RadialHomography,
    Score,
    distort_points,
    division_lift,
    family_of,
    undistort_points,
)

__all__ = [
    # errors
    "SpransacError",
    "ConfigurationError",
    "DataError",
    "NumericalError",
    "DegenerateConfigurationError",
    "PreconditionError",
    # types
    "Aabb2",
    "Correspondence",
    "CorrespondenceSet",
    "EssentialSetup",
    "FundamentalMatrix",
    "Homography",
    "Model",
    "ModelFamily",
    "RadialHomography",
    "Score",
    "distort_points",
    "division_lift",
    "family_of",
    "undistort_points",
    # residuals
    "homography_residuals",
    "epipolar_residuals",
    "radial_residuals",
    "sampson_residuals",
    "model_residuals",
    "residual_homography",
    "residual_epipolar",
    "residual_radial",
]
