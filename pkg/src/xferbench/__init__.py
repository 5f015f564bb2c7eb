"""xferbench: transfer-learning algorithms and the benchmark harness around them.

Subpackages group by concern: ``dataset`` (tabular ingestion, alignment,
balancing, splits), ``imageprep`` (chips and the degradation pipeline),
``kernels`` (distances/affinities), ``diffusion`` (spectral embeddings),
``transfer`` (the divergence-regularized projection), ``classify``
(kNN/1Known/SVM/MLP/DA-MLP) and ``harness`` (protocols, reports, CLI glue).
"""

from .dataset import (
    Dataset,
    Domain,
    Sample,
    SplitSpec,
    align_feature_spaces,
    balance_classes,
    load_tabular,
    save_tabular,
    split,
    standardize,
)
from .diffusion import (
    DiffusionEmbedding,
    DiffusionParams,
    MarkovMatrix,
    diffusion_distance,
    diffusion_embed,
    embed_joint,
    markov_normalize,
)
from .harness import (
    AlgorithmSpec,
    ExperimentConfig,
    ExperimentReport,
    accuracy,
    emit_report,
    run_experiment,
    synth_covariate_shift,
    synth_cross_class,
)
from .imageprep import BoundingBox, ImageChip, crop_chip, degrade, flatten, resize_bilinear, to_grayscale
from .kernels import (
    DistanceMatrix,
    KernelMatrix,
    NeighborhoodGraph,
    gamma_heuristic,
    knn_sparsify,
    pairwise_sq_dists,
    rbf_kernel,
)
from .transfer import (
    Projection,
    TrDMParams,
    kde_divergence,
    kde_divergence_grad,
    trdm_embed,
    trdm_fit,
    trdm_objective,
)

__version__ = "0.1.0"
