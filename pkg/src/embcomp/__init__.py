"""Evaluation toolkit for spatially aligned embedding tables.

Embeddings from different models that share locations can be scored
alone or concatenated, and the gain of a fused table over its best
constituent is summarised by a complementarity index.
"""

from embcomp.complementarity import (
    ComplementarityCell,
    LocationComplementarityMap,
    adjust_family,
    complementarity_index,
    per_location_complementarity,
    task_complementarity,
)
from embcomp.dataset import (
    EmbeddingTable,
    FoldPlan,
    LocationTable,
    Standardizer,
    TaskTable,
    align,
    fit_standardizer,
    fuse,
    load_table,
    make_folds,
)
from embcomp.probes import (
    EvaluationReport,
    LogisticModel,
    LogisticProbe,
    RidgeModel,
    RidgeProbe,
    evaluate,
    logistic_fit,
    ridge_fit,
    ridge_predict,
    score_accuracy,
    score_r2,
)
from embcomp.sampler import (
    GreedyStratifiedSampler,
    PopulationDataset,
    SamplerConfig,
    UniformityMetrics,
    class_mass,
    greedy_stratified_sample,
    sample_sphere_uniform,
    sweep_sampler,
    uniformity,
)
from embcomp.similarity import (
    SimilarityReport,
    cca_mean_correlation,
    linear_cka,
    pairwise_similarity,
)
from embcomp.spatial import (
    EntropyCurve,
    SpatialScale,
    SpatialScaleFit,
    entropy_curve,
    fit_spatial_scale,
    haversine_km,
    scale_score_correlation,
    weighted_pair_density,
)
from embcomp.stats import (
    TestResult,
    benjamini_hochberg,
    sem,
    spearman,
    stars,
    t_test_one_sided,
    wilcoxon_one_sided,
)

__version__ = "0.1.0"
