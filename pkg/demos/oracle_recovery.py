"""Train the three models on a small synthetic cache dataset and compare them.

Runs in about ten seconds.  The full-size version of this comparison lives in
tests/test_acceptance.py.

    python demos/oracle_recovery.py [outdir]
"""

import sys
import time

from perftwin.boosting import BoostParams
from perftwin.flow_model import FlowTrainConfig
from perftwin.ingest import split_train_test
from perftwin.pipeline import evaluate_models, train_model, write_report
from perftwin.sobol import parameter_space, plan_workloads
from perftwin.validation import OracleConfig, generate_oracle_dataset

outdir = sys.argv[1] if len(sys.argv) > 1 else "demo_report"

# 1. plan 128 cache loads on a Sobol grid and measure them on the oracle
plan = plan_workloads(parameter_space("cache_random"), 128)
ds = generate_oracle_dataset(plan, OracleConfig(), k=60)
print(f"{len(ds.load_ids())} loads, {len(ds.groups)} groups, latency in {ds.latency_unit}")

# 2. hold out whole loads, never single groups
split = split_train_test(ds, 30, seed=0)
print(f"train groups {len(split.train)}, test groups {len(split.test)}")

# 3. fit each model on the training loads only
models = []
for name, kw in [("knn", {}),
                 ("gaussian", {"boost": BoostParams(1000, 0.1, 2)}),
                 ("flow", {"flow": FlowTrainConfig(epochs=30)})]:
    t = time.perf_counter()
    models.append(train_model(name, split, "cache_random", **kw))
    print(f"trained {name:8s} in {time.perf_counter() - t:5.1f} s")

# 4. per-load metrics, bootstrapped over the test loads
rep = evaluate_models(split.test, models, ds.latency_unit, eval_seed=0, rounds=100, split_seed=0)
print()
print(f"{'metric':10s}" + "".join(f"{m:>18s}" for m in rep.models))
for metric in ("pem_iops", "pem_lat", "pes_iops", "pes_lat", "fd", "mmd"):
    cells = [rep.summaries[m][metric] for m in rep.models]
    print(f"{metric:10s}" + "".join(f"{c.mean:11.3f} ±{c.std:5.2f}" for c in cells))

# 5. Little's law on measured and predicted clouds
print()
for source, r in rep.correlations.items():
    print(f"little correlation {source:12s} {r:.4f}")

paths = write_report(rep, outdir, split.test)
print(f"\nwrote {len(paths)} files to {outdir}/")
