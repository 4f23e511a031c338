"""Train / evaluate / sample / learning-curve workflows and their outputs.

Model artifacts are JSON documents::

    {"artifact": "perftwin-model", "version": 1, "model": "gaussian",
     "metadata": {...split seed, test-set digest, config...},
     "payload": {...model-specific document...}}

Reports are plain CSV; SVG figures are secondary.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .boosting import BoostParams, grid_search
from .domain import LoadGroup, WorkloadSpec, encode_features, feature_matrix, validate_spec
from .errors import ConfigError, GridTooLarge, SplitMismatch, UnknownParameter
from .flow_model import FlowModel, FlowTrainConfig, fit_flow
from .gaussian_model import GaussianModel, fit_gaussian_model, prepare_targets
from .ingest import Dataset, SplitDataset, atomic_write_text, format_dataset, split_train_test
from .knn_model import KnnIndex, fit_knn
from .metrics import METRIC_NAMES, bootstrap_summary, load_metrics
from .ingest import COLUMNS, dataset_rows
from .validation import DEFAULT_REL_TOL, little_correlation, little_records, reliability_filter

log = logging.getLogger(__name__)

MODEL_NAMES = ("knn", "gaussian", "flow")
ARTIFACT = "perftwin-model"
ARTIFACT_VERSION = 1
_LOADERS = {"knn": KnnIndex, "gaussian": GaussianModel, "flow": FlowModel}


def test_digest(split: SplitDataset) -> str:
    return hashlib.sha256("\n".join(sorted(split.test_load_ids)).encode()).hexdigest()


def dataset_digest(ds: Dataset) -> str:
    return hashlib.sha256(format_dataset(ds.groups, ds.latency_unit).encode()).hexdigest()


@dataclass
class TrainedModel:
    name: str
    model: object
    metadata: dict = field(default_factory=dict)

    def cloud(self, x, k: int, seed) -> np.ndarray:
        """Prediction cloud for features ``x``: k draws, or the kNN neighbour's cloud."""
        if self.name == "knn":
            return self.model.predict(x)
        return self.model.sample(x, k, seed)

    def to_json(self) -> str:
        return json.dumps({
            "artifact": ARTIFACT,
            "version": ARTIFACT_VERSION,
            "model": self.name,
            "metadata": self.metadata,
            "payload": self.model.to_dict(),
        })

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        d = json.loads(text)
        if d.get("artifact") != ARTIFACT or d.get("version") != ARTIFACT_VERSION:
            raise ConfigError("not a perftwin model artifact")
        if d["model"] not in _LOADERS:
            raise ConfigError(f"unknown model {d['model']!r}")
        return cls(d["model"], _LOADERS[d["model"]].from_dict(d["payload"]), d["metadata"])


def save_artifact(tm: TrainedModel, path) -> None:
    atomic_write_text(path, tm.to_json())


def load_artifact(path) -> TrainedModel:
    return TrainedModel.from_json(Path(path).read_text(encoding="utf-8"))


def validation_slice(groups: Sequence[LoadGroup], fraction: float, seed: int):
    """Hold out a fraction of training load ids for hyperparameter selection."""
    ids = list(dict.fromkeys(g.load_id for g in groups))
    n_val = max(1, int(round(fraction * len(ids))))
    if n_val >= len(ids):
        raise ConfigError("too few training loads for a validation slice")
    picked = set(np.asarray(ids)[np.random.default_rng(seed).choice(len(ids), n_val, replace=False)])
    fit = [g for g in groups if g.load_id not in picked]
    val = [g for g in groups if g.load_id in picked]
    return fit, val


def select_boost_params(train: Sequence[LoadGroup], base: BoostParams, val_fraction: float = 0.2,
                        seed: int = 0, depths=(2, 4, 6, 8), learning_rates=(0.01, 0.05, 0.1)):
    fit, val = validation_slice(train, val_fraction, seed)
    Xf = feature_matrix(fit)
    Yf = np.array([prepare_targets(g).as_vector() for g in fit])
    Xv = feature_matrix(val)
    Yv = np.array([prepare_targets(g).as_vector() for g in val])
    best, scores = grid_search(Xf, Yf, Xv, Yv, depths, learning_rates, base)
    log.info("grid search picked depth=%d lr=%g", best.max_depth, best.learning_rate)
    return best, scores


def train_model(name: str, split: SplitDataset, kind: str = "", boost: BoostParams = BoostParams(),
                flow: FlowTrainConfig = FlowTrainConfig(), search: bool = False,
                metadata: Optional[dict] = None) -> TrainedModel:
    """Fit one model on ``split.train`` only."""
    train = list(split.train)
    meta = {
        "model": name,
        "package_version": __version__,
        "kind": kind,
        "split_seed": split.seed,
        "n_test_loads": len(split.test_load_ids),
        "test_digest": test_digest(split),
        "n_train_groups": len(train),
    }
    if name == "knn":
        model = fit_knn(train, kind)
    elif name == "gaussian":
        params = boost
        if search:
            params, scores = select_boost_params(train, boost, seed=split.seed)
            meta["grid_scores"] = {f"depth={d},lr={lr}": s for (d, lr), s in scores.items()}
        meta["boost_params"] = asdict(params)
        model = fit_gaussian_model(train, params, kind)
    elif name == "flow":
        meta["flow_config"] = asdict(flow)
        model = fit_flow(train, flow, kind)
    else:
        raise ConfigError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")
    meta.update(metadata or {})
    return TrainedModel(name, model, meta)


def check_same_split(models: Sequence[TrainedModel], split: SplitDataset) -> None:
    seeds = {m.metadata.get("split_seed") for m in models}
    if len(seeds) > 1:
        raise SplitMismatch(f"artifacts were trained on different split seeds: {sorted(map(str, seeds))}")
    digest = test_digest(split)
    for m in models:
        if m.metadata.get("test_digest") != digest:
            raise SplitMismatch(f"{m.name} artifact was trained against a different test split")


def _seed(*parts) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(p) for p in parts])


@dataclass
class EvaluationReport:
    models: tuple
    per_load: dict  # model -> list of metric dicts (None where undefined)
    summaries: dict  # model -> metric -> BootstrapSummary
    little: dict  # source -> list of LittleRecord
    correlations: dict  # source -> pearson
    predictions: dict  # model -> {(load_id, io_type): points}
    keys: tuple
    split_seed: int
    eval_seed: int
    latency_unit: Optional[str]
    rel_tol: float = DEFAULT_REL_TOL


def evaluate_models(test: Sequence[LoadGroup], models: Sequence[TrainedModel], latency_unit: Optional[str],
                    eval_seed: int = 0, rounds: int = 100, split_seed: int = 0,
                    rel_tol: float = DEFAULT_REL_TOL) -> EvaluationReport:
    """Predict every test group with every model and score it."""
    test = list(test)
    X = feature_matrix(test) if test else np.empty((0, 0))
    per_load, summaries, predictions = {}, {}, {}
    for mi, tm in enumerate(models):
        clouds, rows = {}, []
        for gi, (g, x) in enumerate(zip(test, X)):
            pts = tm.cloud(x, g.k, _seed(eval_seed, mi, gi))
            clouds[g.key] = pts
            try:
                rows.append(load_metrics(g.points, pts))
            except ArithmeticError as exc:
                log.warning("%s: metrics undefined for %s/%s: %s", tm.name, g.load_id, g.spec.io_type, exc)
                rows.append(None)
        predictions[tm.name] = clouds
        per_load[tm.name] = rows
        summaries[tm.name] = {}
        for metric in METRIC_NAMES:
            vals = [r[metric] for r in rows if r is not None]
            summaries[tm.name][metric] = bootstrap_summary(vals, rounds, eval_seed) if vals else None

    little, corr = {}, {}
    sources = [("observations", None)] + [(tm.name, predictions[tm.name]) for tm in models]
    for source, clouds in sources:
        recs = little_records(test, latency_unit, clouds) if latency_unit else []
        little[source] = recs
        corr[source] = little_correlation(recs) if len(recs) >= 2 else float("nan")
    return EvaluationReport(tuple(tm.name for tm in models), per_load, summaries, little, corr,
                            predictions, tuple(g.key for g in test), split_seed, eval_seed,
                            latency_unit, rel_tol)


def _num(v) -> str:
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    return format(float(v), ".10g")


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def metrics_csv(rep: EvaluationReport) -> str:
    """Rows are metrics, columns ``<model>_mean, <model>_std``."""
    header = ["metric"] + [f"{m}_{s}" for m in rep.models for s in ("mean", "std")]
    rows = []
    for metric in METRIC_NAMES:
        row = [metric]
        for m in rep.models:
            b = rep.summaries[m][metric]
            row += [_num(b.mean if b else None), _num(b.std if b else None)]
        rows.append(row)
    return _csv(rows, header)


def per_load_csv(rep: EvaluationReport) -> str:
    rows = []
    for m in rep.models:
        for key, r in zip(rep.keys, rep.per_load[m]):
            rows.append([m, key[0], key[1]] + [_num(r[k]) if r else "" for k in METRIC_NAMES])
    return _csv(rows, ["model", "load_id", "io_type"] + list(METRIC_NAMES))


def _little_rows(recs, rel_tol):
    accepted, _ = reliability_filter(recs, rel_tol) if recs else ([], [])
    ok = {id(r) for r in accepted}
    return [[r.load_id, _num(r.lhs), _num(r.rhs), _num(r.residual), int(id(r) in ok)] for r in recs]


def little_table(recs, rel_tol: float = DEFAULT_REL_TOL) -> str:
    """``load_id, lhs, rhs, residual, accepted`` for one source."""
    return _csv(_little_rows(recs, rel_tol), ["load_id", "lhs", "rhs", "residual", "accepted"])


def little_csv(rep: EvaluationReport) -> str:
    rows = []
    for source, recs in rep.little.items():
        rows += [[source] + r for r in _little_rows(recs, rep.rel_tol)]
    return _csv(rows, ["source", "load_id", "lhs", "rhs", "residual", "accepted"])


def correlation_csv(rep: EvaluationReport) -> str:
    return _csv([[s, _num(c)] for s, c in rep.correlations.items()], ["source", "pearson"])


def predictions_csv(rep: EvaluationReport, model: str, test: Sequence[LoadGroup]) -> str:
    groups = [LoadGroup(g.spec, g.load_id, rep.predictions[model][g.key]) for g in test]
    return format_dataset(groups, rep.latency_unit)


def report_files(rep: EvaluationReport, test: Sequence[LoadGroup], figures: bool = True) -> dict:
    """File name -> content for every evaluation output."""
    files = {
        "metrics.csv": metrics_csv(rep),
        "per_load_metrics.csv": per_load_csv(rep),
        "little_law.csv": little_csv(rep),
        "little_correlation.csv": correlation_csv(rep),
    }
    for m in rep.models:
        files[f"predictions_{m}.csv"] = predictions_csv(rep, m, test)
    if figures:
        from .plots import clouds_svg, little_svg

        files["clouds.svg"] = clouds_svg(test, rep.predictions, rep.models)
        files["little_law.svg"] = little_svg(rep.little)
    return files


def write_report(rep: EvaluationReport, outdir, test: Sequence[LoadGroup], figures: bool = True) -> list:
    """Write every report file into ``outdir``; returns the paths written."""
    outdir = Path(outdir)
    files = report_files(rep, test, figures)
    # all content is computed before anything touches the disk
    for name, text in files.items():
        atomic_write_text(outdir / name, text)
    return [outdir / n for n in files]


# -- sampling -----------------------------------------------------------------

SWEEPABLE = ("read_fraction", "block_size", "n_jobs", "queue_depth", "raid_k", "raid_m", "n_disks", "io_type")


def sweep_specs(base: WorkloadSpec, param: Optional[str], values: Sequence, kind: str) -> list:
    if param is None:
        return [validate_spec(base, kind)]
    if param not in SWEEPABLE:
        raise UnknownParameter(f"cannot sweep {param!r}; choose from {', '.join(SWEEPABLE)}")
    return [validate_spec(base.replace(**{param: v}), kind) for v in values]


def sample_clouds(tm: TrainedModel, specs: Sequence[WorkloadSpec], n: int, seed: int) -> list:
    """One predicted cloud per spec; kNN clouds are truncated/cycled to ``n``."""
    out = []
    for i, spec in enumerate(specs):
        x = encode_features(spec)
        if tm.name == "knn":
            cloud = tm.model.predict(x)
            cloud = cloud[np.arange(n) % len(cloud)] if n else np.empty((0, 2))
        else:
            cloud = tm.model.sample(x, n, _seed(seed, i))
        out.append(cloud)
    return out


def samples_csv(specs: Sequence[WorkloadSpec], clouds: Sequence[np.ndarray], latency_unit: Optional[str],
                id_prefix: str = "S") -> str:
    buf = io.StringIO()
    if latency_unit:
        buf.write(f"# latency_unit={latency_unit}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for i, (spec, cloud) in enumerate(zip(specs, clouds)):
        if len(cloud):
            # LoadGroup requires k >= 2; serialise rows directly
            g = _RowGroup(spec, f"{id_prefix}{i + 1:04d}", cloud)
            w.writerows(dataset_rows([g]))
    return buf.getvalue()


@dataclass(frozen=True)
class _RowGroup:
    spec: WorkloadSpec
    load_id: str
    points: np.ndarray


# -- learning curve -----------------------------------------------------------


def nested_subsets(train: Sequence[LoadGroup], sizes: Sequence[int], seed: int) -> dict:
    """``size -> groups`` where smaller subsets are prefixes of larger ones."""
    ids = list(dict.fromkeys(g.load_id for g in train))
    if max(sizes) > len(ids):
        raise GridTooLarge(f"largest size {max(sizes)} exceeds {len(ids)} available training loads")
    order = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    out = {}
    for size in sizes:
        keep = set(order[:size])
        out[size] = [g for g in train if g.load_id in keep]
    return out


def learning_curve(split: SplitDataset, sizes: Sequence[int], model_names: Sequence[str], latency_unit,
                   kind: str = "", boost: BoostParams = BoostParams(), flow: FlowTrainConfig = FlowTrainConfig(),
                   eval_seed: int = 0, rounds: int = 100) -> list:
    """Rows ``(n_train_loads, model, metric, mean, std)`` on a fixed test split."""
    rows = []
    for size, subset in nested_subsets(split.train, sizes, split.seed).items():
        sub = SplitDataset(tuple(subset), split.test, split.seed, split.test_load_ids)
        models = [train_model(name, sub, kind, boost, flow) for name in model_names]
        rep = evaluate_models(split.test, models, latency_unit, eval_seed, rounds, split.seed)
        for m in rep.models:
            for metric in METRIC_NAMES:
                b = rep.summaries[m][metric]
                rows.append([size, m, metric, _num(b.mean if b else None), _num(b.std if b else None)])
    return rows


def learning_curve_csv(rows) -> str:
    return _csv(rows, ["n_train_loads", "model", "metric", "mean", "std"])
