"""Online federated learning with a dictionary of random-feature kernels.

K simulated edge nodes fit kernel regression models on streaming data with
online gradient descent, weight the kernels with Hedge, and a server
aggregates models by averaging while picking one global kernel index per
round under a fixed per-message scalar budget.
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, IngestionError, ProtocolError
from .kernel_features import (GaussianKernel, KernelDictionary, SpectralSample,
                              bandwidth_ladder, build_dictionary, feature_map,
                              feature_matrix, load_dictionary, save_dictionary)
from .objective import LossConfig, gradient, loss, ogd_step, project_ball
from .edge_node import (DownlinkMessage, NodeState, UplinkMessage,
                        apply_downlink, build_uplink, hedge_pmf, local_update,
                        make_node, predict, propose_kernel, update_hedge)
from .server import (GlobalState, aggregate_indices, count_power_pmf, fedavg,
                     global_round, make_server)
from .data_pipeline import (Dataset, NodeStreams, ar_featurize, load_csv,
                            normalize_minmax, partition, save_csv,
                            synth_generate)
from .orchestrator import (ALGORITHMS, ExperimentConfig, ExperimentResult,
                           FrozenState, TraceRecord, TrialResult,
                           run_experiment, run_trial)
from .evaluation import (CentralPmfTrace, RegretReport, best_hindsight,
                         centralized_pmf, check_frozen_state, hindsight_table,
                         martingale_check, mse_trace, regret,
                         selection_fraction, tv_distance)

__all__ = [
    "__version__",
    "ConfigurationError", "IngestionError", "ProtocolError",
    "GaussianKernel", "SpectralSample", "KernelDictionary",
    "bandwidth_ladder", "build_dictionary", "feature_map", "feature_matrix",
    "save_dictionary", "load_dictionary",
    "LossConfig", "loss", "gradient", "ogd_step", "project_ball",
    "NodeState", "DownlinkMessage", "UplinkMessage", "make_node",
    "hedge_pmf", "apply_downlink", "predict", "local_update", "update_hedge",
    "propose_kernel", "build_uplink",
    "GlobalState", "make_server", "fedavg", "count_power_pmf",
    "aggregate_indices", "global_round",
    "Dataset", "NodeStreams", "load_csv", "save_csv", "normalize_minmax",
    "ar_featurize", "partition", "synth_generate",
    "ALGORITHMS", "ExperimentConfig", "TraceRecord", "TrialResult",
    "ExperimentResult", "FrozenState", "run_experiment", "run_trial",
    "RegretReport", "CentralPmfTrace", "mse_trace", "best_hindsight",
    "hindsight_table", "regret", "centralized_pmf", "tv_distance",
    "selection_fraction", "martingale_check", "check_frozen_state",
]
