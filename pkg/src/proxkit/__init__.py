"""Proximal estimation for penalized linear regression under regular and irregular designs."""

__version__ = "0.1.0"

from .linalg import WeightMatrix, eig_sym, pinv, psd_sqrt, range_projector, weighted_norm
from .penalty import (
    AdaptiveLasso,
    BoxIndicator,
    ElasticNet,
    GroupLasso,
    Lasso,
    Penalty,
    PolyhedronSpec,
    Ridge,
    conjugate_polyhedron,
    euclidean_prox,
    evaluate,
)
from .prox import (
    ProxOptions,
    ProxResult,
    conjugate_prox,
    extended_penalty,
    kernel_condition,
    plse_solve,
    project_polyhedron,
    prox,
)
from .estimators import (
    Dataset,
    adaptive_weights,
    modified_design,
    modified_ridgeless,
    proximal_estimate,
    ridge_initial,
    ridgeless,
    spectrum_prox,
)
