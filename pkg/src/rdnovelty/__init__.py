"""Novelty scoring for research proposals.

Proposals are embedded per text component, accumulated into annual vector-space
landscapes, scored with the local outlier factor, normalized and averaged into
a composite novelty, and validated against downstream R&D indicators with
Mann-Whitney U tests.
"""

from .config import RunConfig
from .corpus import (
    Corpus,
    CorpusError,
    DuplicateDocIdError,
    ProposalRecord,
    filter_by_classification,
    parse_proposals,
    preprocess_text,
    select_new_cohort,
    serialize_proposals,
)
from .embeddings import (
    ComponentTag,
    EmbeddingFormatError,
    EmbeddingMatrix,
    InMemoryMatrixStore,
    PcaModel,
    pca_fit,
    pca_transform,
    read_embeddings,
    write_embeddings,
)
from .landscape import (
    AnnualLandscape,
    NoveltyMatrix,
    NoveltyScore,
    build_landscape,
    compute_k,
    normalize_scores,
    rescore_matrix,
    score_year,
)
from .lof import (
    LofResult,
    NeighborInfo,
    PointSet,
    knn_query,
    lof_batch,
    lof_bruteforce_oracle,
    lrd,
    reach_dist,
)
from .validation import (
    GroupSplit,
    IndicatorSample,
    TestResult,
    mann_whitney_u,
    mwu_permutation_oracle,
    split_novel,
    validation_report,
)

__version__ = "0.1.0"
