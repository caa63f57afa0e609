"""Toolkit for measuring how training orients conv-layer hyperplane
arrangements: vectorize layers, project filters on the all-ones direction,
track the negative fraction across epochs, and probe which layers matter via
reinitialization."""

from ._threads import apply_thread_cap as _apply_thread_cap

_apply_thread_cap()  # must precede every numpy import below

from .arrangement import (
    CellAssignment,
    FilterPolyhedron,
    RowAngleReport,
    SignificanceReport,
    alignment_probability,
    asymptotic_cell,
    binomial_two_sided_p,
    row_angle_uniformity,
    significance_report,
)
from .checkpoints import (
    CheckpointManifest,
    LayerEntry,
    SnapshotStore,
    load_snapshot,
    save_snapshot,
)
from .datasets import (
    Dataset,
    load_cifar_binary,
    load_idx,
    pixel_shuffle,
    randomize_labels,
    split_train_val,
    synth_shapes,
)
from .harness import (
    ConvergenceReport,
    HeatmapGrid,
    RunConfig,
    RunResult,
    desk_bias_config,
    desk_corruption_config,
    desk_failure_config,
    run_bias_tracking,
    run_corruption,
    run_failure_control,
    run_reinit,
    run_training,
)
from .layers import Model
from .npyio import TensorRecord, read_npy, read_npz, write_npy, write_npz
from .projections import (
    BiasTrajectory,
    FilterProjection,
    Histogram,
    LayerBiasRecord,
    filter_cosine,
    histogram,
    layer_cosines,
    negative_fraction,
    trajectory,
)
from .train import (
    ExponentialSchedule,
    InitSpec,
    PerEpochFactorSchedule,
    StepSchedule,
    evaluate,
    grad_check,
    initialize,
    lr_at,
    train_run,
)
from .vectorize import (
    ConvGeometry,
    FilterMatrixView,
    SparseRow,
    dense_matrix,
    receptive_field_count,
    sparse_row,
    verify_circulant,
)

__version__ = "0.1.0"
