"""Convolutional networks that operate directly on the edges of triangle meshes."""
from .autodiff import Tape, Tensor, backward
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, TrainParams, load_config, parse_config
from .conv import ConvKernel, build_symmetric_neighborhood, mesh_conv_forward
from .data import AugmentParams, Dataset, augment, load_dataset, read_eseg, write_eseg
from .features import FeatureStats, apply_stats, compute_input_features, compute_midpoint_features, fit_stats
from .mesh import EdgeTopology, Mesh, build_edge_topology, euler_characteristic, export_mesh, load_obj
from .networks import NetworkConfig, build_classification_net, build_segmentation_net
from .optim import AdamState, adam_step
from .pool import CollapseRecord, PoolHistory, collapse_edge, edge_priority, is_valid_collapse, mesh_pool
from .synthetic import gen_synthetic
from .training import evaluate, infer, train
from .unpool import mesh_unpool

__version__ = "0.1.0"
