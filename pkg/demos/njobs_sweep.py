"""Vary the number of jobs for one write workload and watch the model saturate.

Block size 32 KB, queue depth 8, read fraction 64 %, random access.  We
train a Gaussian model on oracle data, then sample it along n_jobs.

    python demos/njobs_sweep.py
"""

import numpy as np

from perftwin.boosting import BoostParams
from perftwin.domain import WorkloadSpec
from perftwin.ingest import split_train_test
from perftwin.pipeline import sample_clouds, sweep_specs, train_model
from perftwin.sobol import parameter_space, plan_workloads
from perftwin.validation import OracleConfig, generate_oracle_dataset, oracle_means

ds = generate_oracle_dataset(plan_workloads(parameter_space("cache_random"), 256), OracleConfig(), k=40)
split = split_train_test(ds, 50, seed=0)
gauss = train_model("gaussian", split, "cache_random", BoostParams(1000, 0.1, 4))

base = WorkloadSpec("random", "write", 64.0, 32, 1, 8)
jobs = [1, 2, 4, 8, 16, 32, 64]
specs = sweep_specs(base, "n_jobs", jobs, "cache_random")
clouds = sample_clouds(gauss, specs, 500, seed=1)

print(f"{'n_jobs':>6s} {'median iops':>12s} {'oracle iops':>12s} {'median lat':>11s} {'oracle lat':>11s}")
for spec, cloud in zip(specs, clouds):
    truth = oracle_means(spec)
    med = np.median(cloud, axis=0)
    print(f"{spec.n_jobs:6d} {med[0]:12.0f} {truth[0]:12.0f} {med[1]:11.2e} {truth[1]:11.2e}")
