"""Sparse spectral inference with learned diagonal regularization.

The X-Laplacian L_X = A + diag(X) suppresses localized eigenvectors of a
sparse or noisy data matrix by learning a non-positive diagonal X from the
inverse participation ratio of its leading eigenvectors, restoring the
informative spectrum for community detection, pairwise clustering, rank
estimation, and matrix completion.
"""

__version__ = "0.1.0"

from .linalg import (
    DENSE_THRESHOLD,
    EigenPairs,
    LinearOperator,
    NonConvergenceError,
    SparseSymMatrix,
    bipartite_embed,
    load_coordinate,
    matvec,
    save_coordinate,
    top_eigenpairs,
)
from .xlap import (
    DegenerateSpectrumError,
    LearningConfig,
    LearningTrajectory,
    XLaplacianState,
    ipr,
    learn_regularization,
    load_x_diag,
    predicted_eigenvalue_shift,
    predicted_eigenvector_shift,
    predicted_ipr_change,
    save_x_diag,
    select_most_localized,
)
from .graphs import (
    CompletionInstance,
    PairwiseParams,
    PlantedGraph,
    SBMParams,
    add_bipartite_cliques,
    add_cliques,
    add_hubs,
    gen_completion,
    gen_dcsbm,
    gen_pairwise,
    gen_sbm,
    load_edge_list,
    perturb_neighbors,
    save_edge_list,
)
from .baselines import (
    bethe_hessian,
    nonbacktracking_companion,
    nonbacktracking_eigenpairs,
    normalized_adjacency,
    rank_one_regularized,
    sym_laplacian,
    trim,
    zeta_scan,
)
from .inference import (
    ClusteringResult,
    CompletionResult,
    NumericalError,
    als_complete,
    embed_kmeans,
    estimate_rank,
    excess_degree,
    overlap,
    pairwise_limit,
    sbm_threshold,
    spectral_init,
)
