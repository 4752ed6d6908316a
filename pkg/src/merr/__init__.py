"""Mean-embedding ridge regression for learning on distributions.

Each input is a bag of samples from an unobserved distribution.  Bags are
mapped to their empirical kernel mean embeddings and a ridge regressor
with a kernel on embeddings maps them to vector labels.  The package also
carries the closed-form learning-theory quantities for the estimator and a
synthetic harness to check rate saturation empirically.
"""

from ._version import __version__
from .embedding import (
    BaseKernelSpec,
    EmbeddingGeometry,
    PointBag,
    concentration_radius,
    embedding_cross,
    embedding_gram,
    embedding_inner,
    embedding_sq_dist,
    median_heuristic_bandwidth,
)
from .outer_kernel import OuterKernelSpec, holder_exponent, outer_cross, outer_eval, outer_gram
from .regressor import (
    LabeledDataset,
    SingularSystemError,
    TrainedModel,
    cross_validate,
    empirical_risk,
    excess_risk_estimate,
    fit,
    predict,
)

__all__ = [
    "__version__",
    "BaseKernelSpec",
    "EmbeddingGeometry",
    "PointBag",
    "concentration_radius",
    "embedding_cross",
    "embedding_gram",
    "embedding_inner",
    "embedding_sq_dist",
    "median_heuristic_bandwidth",
    "OuterKernelSpec",
    "holder_exponent",
    "outer_cross",
    "outer_eval",
    "outer_gram",
    "LabeledDataset",
    "SingularSystemError",
    "TrainedModel",
    "cross_validate",
    "empirical_risk",
    "excess_risk_estimate",
    "fit",
    "predict",
]
