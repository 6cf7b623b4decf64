"""Short-term multi-energy demand forecasting with small CNNs.

The package covers the full pipeline: a from-scratch rank-4 tensor kernel
(convolution, batch norm, pooling, dense layers with exact gradients), Adam
training, a family of forecaster architectures, correlation-driven input
selection, synthetic multi-energy data, evaluation metrics, an averaging
federated trainer, sklearn-style estimators and a config-driven CLI.
"""

__version__ = "0.1.0"

from .tensor import Tensor4
from .arch import (
    AvgPool,
    BatchNorm,
    Conv2D,
    FrameworkId,
    FullyConnected,
    ImageInput,
    NetworkSpec,
    ReLU,
    RegressionOutput,
    activation_shapes,
    build_all_joint_net,
    build_local_net,
    build_multi_channel_net,
    build_per_vector_net,
    build_single_net,
    format_layer_table,
    parse_layer_table,
)
from .network import Network, load_network, predictions, save_network
from .optim import (
    AdamState,
    TrainConfig,
    TrainHistory,
    TrainLoop,
    adam_step,
    clip_gradients,
    minibatch_schedule,
    predict_batched,
    train,
)
from .data import (
    SAMPLES_PER_DAY,
    BuildingMeta,
    EnergyVector,
    MultiEnergyDataset,
    load_csv,
)
from .synth import SynthConfig, generate, small_config
from .windows import (
    PartitionedWindows,
    SplitBounds,
    SplitMode,
    SplitSpec,
    WindowSet,
    assemble_input,
    make_windows,
    split,
)
from .featsel import (
    CorrTable,
    cross_building_correlation,
    cross_vector_table,
    next_prev_correlation_matrix,
    select_input_channels,
    sliding_mean_correlation,
)
from .metrics import (
    MetricReport,
    daily_reports,
    evaluate_report,
    mape_pct,
    network_total,
    nrmse,
    snr_db,
)
from .fed import FedNode, FedResult, build_fed_nodes, fedavg, federated_train
from .estimators import CNNForecaster, FederatedCNNForecaster
from .experiment import (
    ExperimentConfig,
    emit_plot_data,
    epoch_sweep,
    load_config,
    run_experiment,
)
from .evaluate import evaluate_run
