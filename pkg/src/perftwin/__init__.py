"""Generative performance models for storage-system components.

Learn the conditional distribution of (IOPS, latency) given a workload and
pool configuration, sample it for unseen inputs, and score the samples.
"""

__version__ = "0.1.0"

from .domain import LoadGroup, PerfPoint, WorkloadSpec, encode_features, validate_spec
from .ingest import Dataset, SplitDataset, group_stats, parse_dataset, split_train_test, write_dataset
from .boosting import BoostParams, TreeEnsemble, fit_ensemble
from .gaussian_model import GaussianModel, fit_gaussian_model, prepare_targets
from .flow_model import FlowModel, FlowTrainConfig, fit_flow
from .knn_model import KnnIndex, fit_knn
from .metrics import bootstrap_summary, frechet_distance, load_metrics, mmd_rbf, pearson, pem, pes
from .sobol import parameter_space, plan_workloads, sobol_points
from .validation import (
    OracleConfig,
    generate_oracle_dataset,
    little_correlation,
    little_record,
    little_records,
    reliability_filter,
)
