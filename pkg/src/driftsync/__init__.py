"""Communication-efficient distributed online learning with kernel models."""
from .learners import (
    Compression,
    LearnerParams,
    LinearModel,
    LossSpec,
    UpdateOutcome,
    kernel_sgd_update,
    linear_sgd_update,
    loss_eval,
    project_newest,
    truncate,
    update_with_compression,
)
from .protocol import (
    ByteCostModel,
    CommLedger,
    CoordinatorState,
    SyncStrategy,
    local_condition,
    message_size_down,
    message_size_up,
    sync_step,
)
from .rkhs import (
    KernelModel,
    KernelSpec,
    average,
    distance_sq,
    divergence,
    inner_product,
    kernel_eval,
    predict,
)
from .simulator import ExperimentConfig, RunResult, compare, run
from .streams import StreamSpec, generate_example

__version__ = "0.1.0"
