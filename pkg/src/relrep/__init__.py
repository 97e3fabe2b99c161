"""Representation learning from reliable relations: compact groups, partitioned target spaces,
assignment-based regression and triplet coupling between local representations."""

from .dataset import Dataset, SyntheticSpec, gen_synthetic, load_dataset, save_dataset
from .embednet import EmbedNet, SgdConfig, forward, load_checkpoint, save_checkpoint
from .grouping import Group, GroupSet, calibrate_baseline, extract_groups
from .neighbors import EmbeddedSet, distance_matrix, knn, percentile
from .partition import Partition, PartitionInstance, build_instance, solve_partition
from .pipeline import PipelineConfig, load_config, run, run_iteration, train_init
from .targets import TargetSpace, build_target_space, sample_sphere

__version__ = "0.1.0"
