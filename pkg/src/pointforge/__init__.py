"""pointforge: multi-task point-cloud learning at desk scale.

Building-type classification and part segmentation over voxelized point
clouds, with a PointNeXt-style encoder/decoder trained by a compact numpy
autodiff engine, contrastive multi-modal pretraining against precomputed
embeddings, a procedural building generator, and the matching evaluation
metric suite.
"""

__version__ = "0.1.0"

from .backend import active_backend, use_backend  # noqa: F401
from .data import (  # noqa: F401
    BUILDING_TYPES,
    SEGMENTATION_PARTS,
    DatasetSplit,
    LabelVocabulary,
    PointCloud,
    building_type_vocabulary,
    compute_heights,
    load_point_cloud,
    parse_building_name,
    save_point_cloud,
    segmentation_vocabulary,
)
from .kernels import (  # noqa: F401
    NeighborIndex,
    VoxelGrid,
    ball_query,
    build_voxel_grid,
    enumerate_test_subclouds,
    farthest_point_sampling,
    inverse_distance_interpolate,
    knn,
    sample_train_subcloud,
)
from .model import MultiTaskPointModel, build_model, load_checkpoint, make_config  # noqa: F401

# training entry points live in pointforge.train (train/evaluate/predict);
# re-exporting the train() function here would shadow the submodule
from .train import LoadedDataset, TrainConfig, load_dataset  # noqa: F401
