"""Cross-domain single-view place recognition with raw-feature NN descriptors."""

from .model import (
    DomainLabel,
    Feature,
    ImageRecord,
    MinerConfig,
    PyramidConfig,
    Season,
    cell_of,
)
from .library import ExperienceLibrary, build_library, make_filter
from .miner import NNExplanation, approx_error_profile, mine, mine_batch, truncated_similarity
from .descriptor import Role, SceneDescriptor, describe_database, describe_query
from .index import InvertedIndex, build_index, load_index, save_index
from .matcher import (
    RankedResult,
    explanation_histogram,
    feature_similarity,
    pyramid_kernel,
    rank,
    top_subimage_pairs,
)
from .bow import Vocabulary, bow_rank, train_vocabulary
from .evalharness import (
    DomainTransform,
    ExperimentConfig,
    SyntheticWorldConfig,
    World,
    anr,
    generate_world,
    mean_average_precision,
    run_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
