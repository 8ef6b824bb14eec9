"""msgen: multiscale structure graphs and point cloud generation.

A structure graph abstracts a point cloud into vertices (cluster centre +
capacity) and connectivity edges. This package extracts such graphs from
clouds, edits them, and generates dense clouds back from them, either with
non-learned baselines or with a similarity-transformation-invariant
graph-attention generator trained on a synthetic shape corpus.
"""

__version__ = "0.1.0"

from .baselines import graph_gaussian, graph_interpolation
from .errors import (InvalidInputError, MsgenError, NonFiniteError, ParseError,
                     VersionError)
from .extract import (Clustering, ExtractParams, clusters_to_graph, extract_msg,
                      extract_msg_plain, kmeans, mixed_precision_random_kmeans)
from .frames import (FrameSet, VertexFrame, compute_frames, principal_edges,
                     relative_capacity_ratio, vertex_rotation, vertex_scale_factor)
from .geometry import (PointCloud, SimilarityTransform, apply_similarity,
                       chamfer_distance, fps_downsample, load_cloud, save_cloud,
                       weighted_chamfer_distance)
from .graph import (GraphEdit, MsgGraph, MsgVertex, apply_edit, load_graph,
                    neighbors_within, save_graph, total_capacity, validate)
from .model import (EncodedGraph, ModelConfig, ModelWeights, assemble_point_cloud,
                    decode_offsets, encode_graph, expand_per_point, generate,
                    init_weights, load_weights, sample_point_noise, save_weights)
from .training import (DatasetSpec, TrainConfig, build_dataset, evaluate,
                       load_checkpoint, save_checkpoint, train)
