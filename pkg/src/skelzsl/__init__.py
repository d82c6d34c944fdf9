"""Zero-shot skeleton action recognition on numpy.

A graph-convolutional skeleton encoder trained on seen classes, two heads that
tie visual features to class-label embeddings (a linear hinge-rank projection
and a learned relation network), class-split generators and a ZSL / GZSL
evaluator, wired together by a resumable, seeded pipeline.
"""

from .devise import DeviseHyper, DeviseProjection, hinge_rank_loss, predict_devise, train_devise
from .embeddings import LabelEmbeddingTable, load_embeddings, pairwise_distances, random_embeddings
from .encoder import (EncoderConfig, EncoderModel, VisualFeatureMatrix, encoder_forward,
                      extract_features, init_encoder, train_encoder)
from .errors import (ConfigError, ContaminationError, DataError, DegenerateInputError,
                     InfeasibleSplitError, NumericalError, ParseError, ShapeError,
                     TopologyError, UsageError, ZslError)
from .evaluate import EvalReport, evaluate_gzsl, evaluate_zsl, hit_at_k
from .graph import JointTopology, SkeletonSequence, build_adjacency, normalize_adjacency, ntu_topology
from .numerics import derive_seed, make_rng
from .pipeline import Experiment, load_config, resolve_config, run_pipeline
from .relation import RelationHead, RelationHyper, predict_relation, relation_score, train_relation
from .splits import ClassSplit, furthest_split, nearest_split, random_split
from .synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"
