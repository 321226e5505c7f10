"""Diffuse-interface segmentation on graphs and hypergraphs.

Smooth and obstacle (non-smooth) Allen-Cahn schemes for two-class and
multiclass semi-supervised classification, solved in a truncated basis of
normalized (hyper)graph Laplacian eigenvectors.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError, ConfigWarning, ConvergenceError, GraphConstructionError, ParameterError, PhaseGraphError,
)
from .graph import FeatureSet, LaplacianKind, WeightedGraph, gaussian_weights, laplacian, local_scales, zmp_weights  # noqa: E402
from .hypergraph import (  # noqa: E402
    CategoricalTable, Hypergraph, hyperedges_from_attributes, hypergraph_laplacian, hypergraph_quadratic_form,
)
from .spectral import SpectralBasis, dense_eigen_oracle, smallest_eigenpairs  # noqa: E402
from .scalar import FidelitySet, ScalarState, SolverConfig, classify_scalar, initial_state, run_scalar  # noqa: E402
from .multiclass import (  # noqa: E402
    InteractionMatrix, MulticlassFidelity, SimplexState, classify_multiclass, init_multiclass,
    multiclass_potential_gradient, run_multiclass, simplex_project,
)
from .evaluation import SegmentationResult, foc, misclassification, sample_fidelity  # noqa: E402
