"""Path-regularizer toolkit for feedforward ReLU networks.

Core pieces: DAG construction with level sets (`graph`), forward/backprop
with a truncated soft-max loss (`network`), the rescaling symmetry and
canonical balancing (`rescale`), group and path norms with a one-pass
dynamic program (`norms`), SGD/AdaGrad and the rescaling-invariant
path-scaled optimizer (`optim`), binary dataset loaders (`data`), and a
desk-scale experiment harness (`experiments`, `cli`).
"""

from . import errors
from .data import BatchStream, Dataset, SplitSpec, downsample, load_cifar_binary, load_idx, split_and_batch, write_idx
from .experiments import (
    ExperimentConfig,
    MetricsLog,
    TrainResult,
    measure_step_time,
    run_balance_study,
    run_optimizer_compare,
    run_width_sweep,
    train_network,
)
from .graph import (
    NetworkGraph,
    PATH_CAP_DEFAULT,
    build_dag,
    build_layered,
    enumerate_paths,
    parse_architecture,
    paths_through_edge,
    read_graph_file,
)
from .network import (
    ActivationRecord,
    Batch,
    backprop,
    error_rate,
    forward,
    loss_gradient,
    mean_loss,
    output_scores,
    truncated_softmax_loss,
)
from .norms import (
    PathVector,
    group_norm,
    max_norm,
    path_norm_bruteforce,
    path_norm_dp,
    path_sums_in,
    path_sums_out,
    path_vector,
)
from .optim import (
    AdaGrad,
    DropoutMask,
    PathScaleTable,
    PathSGD,
    SGD,
    compute_path_scales,
    edge_scale_bruteforce,
    make_optimizer,
    sample_dropout,
)
from .rescale import (
    RescaleOp,
    balance,
    init_balanced,
    init_unbalanced,
    is_rescaling_equivalent,
    random_rescale_ops,
    rescale,
    rescale_sequence,
)
from .verify import run_verify

__version__ = "0.1.0"
