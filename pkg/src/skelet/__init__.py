"""Skeleton-transformation action recognition toolkit.

Fine-grained whole-body keypoints are selected down to an expressive 65-point
skeleton, then modeled by a graph-convolutional network whose blocks learn to
re-weight and progressively downsample the joint set.  Everything runs on a
small float64 tensor core with hand-written backward rules, so gradients are
verifiable against finite differences, and an analytic profiler accounts for
every multiply-accumulate the forward pass executes.
"""

from .diffcore import MacCounter, Parameter, Tape, Tensor, check_gradients, mac_counting
from .errors import (
    ConfigError,
    FormatError,
    InsufficientDataError,
    InsufficientFramesError,
    IsolatedJointError,
    LayoutError,
    NumericError,
    ParseError,
    PartitionError,
    ShapeError,
    SkeletError,
    TrainingDivergedError,
)
from .estimators import ExpressiveKeypointSelector, SkeletonActionClassifier, UniformFrameSampler
from .mapping import (
    BlockConfig,
    MappingMatrix,
    PartitionMap,
    apply_mapping,
    expressive_partitions,
    grouped_mapping_block,
    init_downsample_matrix,
    init_reweight_matrix,
    transform_adjacency,
)
from .network import (
    Network,
    NetworkConfig,
    TrainConfig,
    build_network,
    forward,
    train,
    uniform_sample,
)
from .pooling import IPConfig, instance_pool, make_ip_params
from .profiler import CostReport, count_flops, count_ip_flops, count_params
from .selection import (
    KeypointStats,
    SelectionConfig,
    compute_stats,
    motion_variance,
    rank_keypoints,
    select_expressive,
    video_variance,
)
from .skeleton import (
    AdjacencyMatrix,
    KeypointLayout,
    SkeletonSequence,
    add_self_links,
    build_adjacency,
    expressive_layout,
    normalize_adjacency,
    wholebody_layout,
)

__version__ = "0.1.0"
