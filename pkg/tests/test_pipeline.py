import numpy as np
import pytest

from perftwin.boosting import BoostParams
from perftwin.domain import LoadGroup, encode_features, feature_matrix
from perftwin.errors import GridTooLarge, SplitMismatch, UnknownParameter
from perftwin.flow_model import FlowTrainConfig
from perftwin.ingest import SplitDataset, parse_dataset_text, split_train_test
from perftwin.metrics import METRIC_NAMES
from perftwin.pipeline import (
    TrainedModel,
    check_same_split,
    evaluate_models,
    learning_curve,
    load_artifact,
    metrics_csv,
    nested_subsets,
    report_files,
    sample_clouds,
    samples_csv,
    save_artifact,
    sweep_specs,
    train_model,
)
from perftwin.sobol import parameter_space, plan_workloads
from perftwin.validation import OracleConfig, generate_oracle_dataset

from conftest import cache_spec

FAST = BoostParams(150, 0.1, 2)


@pytest.fixture(scope="module")
def split(small_oracle):
    return split_train_test(small_oracle, 15, 2)


@pytest.fixture(scope="module")
def models(split):
    return [train_model("knn", split, "cache_random"),
            train_model("gaussian", split, "cache_random", FAST),
            train_model("flow", split, "cache_random", flow=FlowTrainConfig(epochs=2))]


def test_artifact_round_trip(models, split, tmp_path):
    X = feature_matrix(split.test)
    for tm in models:
        path = tmp_path / f"{tm.name}.json"
        save_artifact(tm, path)
        back = load_artifact(path)
        assert back.metadata == tm.metadata
        for i, x in enumerate(X[:5]):
            np.testing.assert_array_equal(back.cloud(x, 20, i), tm.cloud(x, 20, i))


def test_flow_zero_epochs_is_identity(split):
    tm = TrainedModel.from_json(train_model("flow", split, flow=FlowTrainConfig(epochs=0)).to_json())
    x = feature_matrix(split.test)[0]
    z, logdet = tm.model.net.forward(np.zeros((3, 2)), np.zeros((3, 7)))
    assert not z.any() and not logdet.any()


def test_knn_artifact_grows_with_measurements(small_oracle):
    sizes = []
    for n_test in (50, 30, 10):
        s = split_train_test(small_oracle, n_test, 0)
        tm = train_model("knn", s)
        n_points = sum(g.k for g in s.train)
        sizes.append(len(tm.to_json()) / n_points)
    # bytes per stored measurement stay roughly constant
    assert max(sizes) / min(sizes) < 1.2


def test_metadata_records_split(models, split):
    for tm in models:
        assert tm.metadata["split_seed"] == 2
        assert tm.metadata["n_train_groups"] == len(split.train)
    check_same_split(models, split)


def test_split_mismatch(models, small_oracle, split):
    other = split_train_test(small_oracle, 15, 3)
    with pytest.raises(SplitMismatch):
        check_same_split(models, other)
    odd = train_model("knn", other)
    with pytest.raises(SplitMismatch):
        check_same_split(models + [odd], split)


def test_knn_on_duplicated_load_scores_zero(split):
    # a test configuration that also appears (under another id) in train
    g = split.train[0]
    dup = LoadGroup(g.spec, "DUP", g.points)
    test = (dup,) + split.test
    knn = train_model("knn", SplitDataset(split.train, test, split.seed, ("DUP",) + split.test_load_ids))
    rep = evaluate_models(test, [knn], "s", 0, 10)
    first = rep.per_load["knn"][0]
    assert first["pem_iops"] == first["pem_lat"] == first["pes_iops"] == first["pes_lat"] == 0
    assert first["fd"] <= 1e-12 and first["mmd"] == 0.0


def test_report_layout_and_determinism(models, split):
    a = report_files(evaluate_models(split.test, models, "s", 5, 20), split.test)
    b = report_files(evaluate_models(split.test, models, "s", 5, 20), split.test)
    assert a == b
    lines = a["metrics.csv"].splitlines()
    assert lines[0] == "metric,knn_mean,knn_std,gaussian_mean,gaussian_std,flow_mean,flow_std"
    assert [l.split(",")[0] for l in lines[1:]] == list(METRIC_NAMES)
    assert a["little_correlation.csv"].splitlines()[0] == "source,pearson"
    parsed = parse_dataset_text(a["predictions_gaussian.csv"], "cache_random")
    assert [g.key for g in parsed.groups] == [g.key for g in split.test]
    assert a["clouds.svg"].startswith("<?xml")


def test_undefined_metrics_are_skipped(split):
    const = LoadGroup(split.test[0].spec, "C", [[5.0, 1.0]] * 4)
    knn = train_model("knn", split)
    rep = evaluate_models((const,) + split.test, [knn], "s", 0, 10)
    assert rep.per_load["knn"][0] is None
    assert rep.summaries["knn"]["pem_iops"] is not None


def test_sweep_and_sampling(models):
    gauss = models[1]
    base = cache_spec(block_size=32, queue_depth=8, read_fraction=64.0)
    specs = sweep_specs(base, "n_jobs", [2, 4, 8], "cache_random")
    assert [s.n_jobs for s in specs] == [2, 4, 8]
    with pytest.raises(UnknownParameter):
        sweep_specs(base, "colour", [1], "cache_random")
    clouds = sample_clouds(gauss, specs, 7, 3)
    assert [c.shape for c in clouds] == [(7, 2)] * 3
    again = sample_clouds(gauss, specs, 7, 3)
    assert all(np.array_equal(a, b) for a, b in zip(clouds, again))
    text = samples_csv(specs, sample_clouds(gauss, specs, 0, 3), "s")
    assert len(text.splitlines()) == 2  # unit comment and header only
    knn_clouds = sample_clouds(models[0], specs, 100, 0)
    assert all(len(c) == 100 for c in knn_clouds)


def test_nested_subsets(split):
    subsets = nested_subsets(split.train, [5, 20, 45], 0)
    ids = {n: {g.load_id for g in gs} for n, gs in subsets.items()}
    assert [len(v) for v in ids.values()] == [5, 20, 45]
    assert ids[5] <= ids[20] <= ids[45]
    with pytest.raises(GridTooLarge):
        nested_subsets(split.train, [46], 0)


def test_learning_curve_single_size(split):
    rows = learning_curve(split, [10], ["knn"], "s", rounds=10)
    assert len(rows) == len(METRIC_NAMES)
    assert {r[0] for r in rows} == {10}


def test_learning_curve_trend():
    plan = plan_workloads(parameter_space("cache_random"), 512)
    ds = generate_oracle_dataset(plan, OracleConfig(), 40)
    s = split_train_test(ds, 100, 0)
    rows = learning_curve(s, [32, 128, 412], ["knn", "gaussian"], "s", boost=BoostParams(300, 0.1, 2), rounds=20)
    for model in ("knn", "gaussian"):
        for metric in ("pem_iops", "pem_lat"):
            vals = {r[0]: float(r[3]) for r in rows if r[1] == model and r[2] == metric}
            assert vals[412] <= vals[32]
