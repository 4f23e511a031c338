"""Command-line entry point.

Every option can come from a flat ``key=value`` config file (``--config``)
or a flag; flags win.  Each run writes ``<command>_config.txt`` with the
fully resolved settings next to its outputs.  The default output directory
is ``$PERFTWIN_OUTPUT_DIR`` or ``./perftwin-out``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from . import __version__
from .boosting import BoostParams
from .domain import DATASET_KINDS, WorkloadSpec, kind_ranges
from .errors import ConfigError, DataError, NumericError, PerfTwinError
from .flow_model import FlowTrainConfig
from .ingest import atomic_write_text, format_dataset, format_plan, parse_dataset, split_train_test
from .sobol import parameter_space, plan_workloads
from .validation import OracleConfig, generate_oracle_dataset, little_correlation, little_records

log = logging.getLogger("perftwin")

ENV_OUTPUT_DIR = "PERFTWIN_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "perftwin-out"


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _strs(text):
    if isinstance(text, (list, tuple)):
        return list(text)
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in _strs(text)]


def _opt_int(text):
    return None if text in (None, "", "none") else int(text)


# name -> (converter, default, help); defaults of None mean "not set"
OPTIONS = {
    "output_dir": (str, None, "output directory"),
    "kind": (str, "cache_random", f"dataset kind: {', '.join(DATASET_KINDS)}"),
    "log_level": (str, "INFO", "logging level"),
    # planning / oracle
    "n_loads": (int, 256, "number of planned loads"),
    "skip": (int, 1, "initial Sobol points to drop"),
    "id_prefix": (str, "L", "load id prefix"),
    "k": (int, 120, "measurements per load and io type"),
    "oracle_seed": (int, 0, "oracle noise seed"),
    "noise": (float, OracleConfig.noise, "oracle log-IOPS noise scale"),
    "rho": (float, OracleConfig.rho, "oracle log-log correlation"),
    "latency_unit": (str, OracleConfig.latency_unit, "latency unit written by the oracle"),
    # data / split
    "data": (str, None, "dataset CSV path"),
    "split_seed": (_opt_int, None, "train/test split seed"),
    "n_test_loads": (_opt_int, None, "number of held-out load configurations"),
    # models
    "model": (str, "gaussian", "model: knn, gaussian or flow"),
    "models": (_strs, ["knn", "gaussian", "flow"], "comma-separated model list"),
    "iterations": (int, BoostParams.n_iterations, "boosting iterations"),
    "depth": (int, BoostParams.max_depth, "tree depth"),
    "learning_rate": (float, BoostParams.learning_rate, "boosting learning rate"),
    "min_samples_leaf": (int, BoostParams.min_samples_leaf, "minimum samples per leaf"),
    "boost_seed": (int, BoostParams.seed, "boosting seed"),
    "search": (_bool, False, "grid-search depth and learning rate on a validation slice"),
    "epochs": (int, FlowTrainConfig.epochs, "flow training epochs"),
    "batch_size": (int, FlowTrainConfig.batch_size, "flow minibatch size"),
    "flow_lr": (float, FlowTrainConfig.learning_rate, "flow Adam learning rate"),
    "flow_seed": (int, FlowTrainConfig.seed, "flow init/shuffle seed"),
    # evaluation
    "artifacts": (_strs, [], "comma-separated model artifact paths"),
    "eval_seed": (int, 0, "prediction and bootstrap seed"),
    "rounds": (int, 100, "bootstrap rounds"),
    "rel_tol": (float, 0.3, "Little's-law relative tolerance"),
    "figures": (_bool, True, "also write SVG figures"),
    "predictions": (str, None, "predicted clouds CSV to check instead of the measurements"),
    # sampling
    "artifact": (str, None, "model artifact path"),
    "load_type": (str, None, "random or sequential"),
    "io_type": (str, "read", "read or write"),
    "read_fraction": (float, None, "read fraction, percent"),
    "block_size": (int, None, "block size, KB"),
    "n_jobs": (int, None, "parallel jobs"),
    "queue_depth": (int, None, "queue depth"),
    "raid_k": (_opt_int, None, "RAID data blocks"),
    "raid_m": (_opt_int, None, "RAID parity blocks"),
    "n_disks": (_opt_int, None, "disks in the pool"),
    "sweep": (str, None, "parameter to vary"),
    "values": (_strs, [], "comma-separated sweep values"),
    "n": (int, 120, "points per sampled cloud"),
    "seed": (int, 0, "sampling seed"),
    # learning curve
    "sizes": (_ints, [], "comma-separated numbers of training loads"),
}

COMMON = ("output_dir", "kind", "log_level")
MODEL_OPTS = ("iterations", "depth", "learning_rate", "min_samples_leaf", "boost_seed", "search",
              "epochs", "batch_size", "flow_lr", "flow_seed")
SPLIT_OPTS = ("data", "split_seed", "n_test_loads")
SPEC_OPTS = ("load_type", "io_type", "read_fraction", "block_size", "n_jobs", "queue_depth",
             "raid_k", "raid_m", "n_disks")

COMMANDS = {
    "plan": ("write a Sobol workload plan", ("n_loads", "skip", "id_prefix")),
    "oracle": ("generate a synthetic dataset from the oracle",
               ("n_loads", "skip", "id_prefix", "k", "oracle_seed", "noise", "rho", "latency_unit")),
    "ingest-check": ("parse and validate a dataset", ("data",)),
    "train": ("train one model on the train split", SPLIT_OPTS + ("model",) + MODEL_OPTS),
    "evaluate": ("score model artifacts on the test split",
                 SPLIT_OPTS + ("artifacts", "eval_seed", "rounds", "rel_tol", "figures")),
    "sample": ("sample clouds from an artifact, optionally sweeping one parameter",
               ("artifact",) + SPEC_OPTS + ("sweep", "values", "n", "seed")),
    "learning-curve": ("metrics versus number of training loads",
                       SPLIT_OPTS + ("sizes", "models", "eval_seed", "rounds") + MODEL_OPTS),
    "validate": ("Little's-law check of measurements or predictions", ("data", "predictions", "rel_tol")),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="perftwin", description="Generative storage performance models.")
    parser.add_argument("--version", action="version", version=f"perftwin {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (help_text, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=argparse.SUPPRESS, help="key=value config file")
        for opt in COMMON + opts:
            conv, default, h = OPTIONS[opt]
            flag = "--" + opt.replace("_", "-")
            if conv is _bool:
                p.add_argument(flag, dest=opt, action=argparse.BooleanOptionalAction,
                               default=argparse.SUPPRESS, help=f"{h} (default {default})")
            else:
                p.add_argument(flag, dest=opt, default=argparse.SUPPRESS, help=f"{h} (default {default})")
    return parser


def read_config_file(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are ignored."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    allowed = COMMON + COMMANDS[command][1]
    cfg = {k: OPTIONS[k][1] for k in allowed}
    for source in (file_values, flag_values):
        for key, raw in source.items():
            if key not in cfg:
                raise ConfigError(f"option {key!r} does not apply to {command}")
            try:
                cfg[key] = OPTIONS[key][0](raw) if isinstance(raw, str) else raw
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
    if cfg["output_dir"] is None:
        cfg["output_dir"] = os.environ.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR
    if cfg["kind"] not in DATASET_KINDS:
        raise ConfigError(f"unknown dataset kind {cfg['kind']!r}; expected one of {', '.join(DATASET_KINDS)}")
    return cfg


def format_config(command: str, cfg: dict) -> str:
    lines = [f"# perftwin {__version__} {command}"]
    for key in sorted(cfg):
        v = cfg[key]
        if isinstance(v, (list, tuple)):
            v = ",".join(map(str, v))
        elif v is None:
            v = ""
        lines.append(f"{key}={v}")
    return "\n".join(lines) + "\n"


def _out(cfg) -> Path:
    return Path(cfg["output_dir"])


def _require(cfg, *keys):
    for key in keys:
        if cfg.get(key) in (None, "", []):
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")


def _load_data(cfg):
    _require(cfg, "data")
    if not Path(cfg["data"]).is_file():
        raise ConfigError(f"dataset {cfg['data']} does not exist")
    return parse_dataset(cfg["data"], cfg["kind"])


def _split(cfg, ds):
    # record the values actually used in the resolved config
    if cfg["split_seed"] is None:
        cfg["split_seed"] = 0
    if cfg["n_test_loads"] is None:
        cfg["n_test_loads"] = 100
    return split_train_test(ds, cfg["n_test_loads"], cfg["split_seed"])


def _boost(cfg) -> BoostParams:
    return BoostParams(cfg["iterations"], cfg["learning_rate"], cfg["depth"], cfg["min_samples_leaf"],
                       cfg["boost_seed"])


def _flow(cfg) -> FlowTrainConfig:
    return replace(FlowTrainConfig(), epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                   learning_rate=cfg["flow_lr"], seed=cfg["flow_seed"])


# -- commands -----------------------------------------------------------------


def cmd_plan(cfg) -> dict:
    plan = plan_workloads(parameter_space(cfg["kind"]), cfg["n_loads"], cfg["skip"], cfg["id_prefix"])
    log.info("planned %d loads (%d rows)", cfg["n_loads"], len(plan))
    return {"plan.csv": format_plan(plan)}


def cmd_oracle(cfg) -> dict:
    plan = plan_workloads(parameter_space(cfg["kind"]), cfg["n_loads"], cfg["skip"], cfg["id_prefix"])
    ocfg = OracleConfig(noise=cfg["noise"], rho=cfg["rho"], latency_unit=cfg["latency_unit"],
                        seed=cfg["oracle_seed"])
    ds = generate_oracle_dataset(plan, ocfg, cfg["k"], cfg["kind"])
    log.info("oracle dataset: %d groups, %d points", len(ds.groups), ds.n_points)
    return {"oracle.csv": format_dataset(ds.groups, ds.latency_unit)}


def cmd_ingest_check(cfg) -> dict:
    ds = _load_data(cfg)
    ids = ds.load_ids()
    ks = sorted({g.k for g in ds.groups})
    summary = (f"kind={ds.kind}\nloads={len(ids)}\ngroups={len(ds.groups)}\npoints={ds.n_points}\n"
               f"points_per_group={','.join(map(str, ks))}\nlatency_unit={ds.latency_unit or ''}\n")
    sys.stdout.write(summary)
    return {"ingest_summary.txt": summary}


def _loss_log(tm) -> str:
    hist = getattr(tm.model, "loss_history", None)
    if hist is None and hasattr(tm.model, "ensemble"):
        hist = tm.model.ensemble.loss_history
    if not hist:
        return ""
    step = "epoch" if tm.name == "flow" else "iteration"
    return f"{step},loss\n" + "".join(f"{i},{format(float(v), '.10g')}\n" for i, v in enumerate(hist))


def cmd_train(cfg) -> dict:
    from .pipeline import dataset_digest, train_model

    name = cfg["model"]
    ds = _load_data(cfg)
    split = _split(cfg, ds)
    tm = train_model(name, split, cfg["kind"], _boost(cfg), _flow(cfg), cfg["search"],
                     {"latency_unit": ds.latency_unit, "dataset_digest": dataset_digest(ds),
                      "dataset_path": str(cfg["data"])})
    files = {f"model_{name}.json": tm.to_json()}
    loss = _loss_log(tm)
    if loss:
        files[f"train_log_{name}.csv"] = loss
    return files


def cmd_evaluate(cfg) -> dict:
    from .pipeline import check_same_split, evaluate_models, load_artifact, report_files

    _require(cfg, "artifacts")
    models = []
    for path in cfg["artifacts"]:
        if not Path(path).is_file():
            raise ConfigError(f"artifact {path} does not exist")
        models.append(load_artifact(path))
    # the split defaults to the one recorded in the artifacts
    first = models[0].metadata
    if cfg["split_seed"] is None:
        cfg["split_seed"] = first.get("split_seed", 0)
    if cfg["n_test_loads"] is None:
        cfg["n_test_loads"] = first.get("n_test_loads", 100)
    ds = _load_data(cfg)
    split = _split(cfg, ds)
    check_same_split(models, split)
    rep = evaluate_models(split.test, models, ds.latency_unit, cfg["eval_seed"], cfg["rounds"],
                          split.seed, cfg["rel_tol"])
    return report_files(rep, split.test, cfg["figures"])


def _base_spec(cfg, kind: str) -> WorkloadSpec:
    r = kind_ranges(kind)
    _require(cfg, "read_fraction", "block_size", "n_jobs", "queue_depth")
    return WorkloadSpec(cfg["load_type"] or r.load_type, cfg["io_type"], cfg["read_fraction"],
                        cfg["block_size"], cfg["n_jobs"], cfg["queue_depth"],
                        cfg["raid_k"], cfg["raid_m"], cfg["n_disks"])


SWEEP_TYPES = {"read_fraction": float, "io_type": str, "load_type": str}


def cmd_sample(cfg) -> dict:
    from .pipeline import load_artifact, sample_clouds, samples_csv, sweep_specs

    _require(cfg, "artifact")
    if not Path(cfg["artifact"]).is_file():
        raise ConfigError(f"artifact {cfg['artifact']} does not exist")
    tm = load_artifact(cfg["artifact"])
    kind = tm.metadata.get("kind") or cfg["kind"]
    base = _base_spec(cfg, kind)
    values = cfg["values"]
    if cfg["sweep"]:
        conv = SWEEP_TYPES.get(cfg["sweep"], int)
        try:
            values = [conv(v) for v in values]
        except ValueError as exc:
            raise ConfigError(f"bad sweep value: {exc}") from None
    specs = sweep_specs(base, cfg["sweep"], values, kind)
    if cfg["n"] < 0:
        raise ConfigError("n must be non-negative")
    clouds = sample_clouds(tm, specs, cfg["n"], cfg["seed"])
    return {"samples.csv": samples_csv(specs, clouds, tm.metadata.get("latency_unit"))}


def cmd_learning_curve(cfg) -> dict:
    from .pipeline import learning_curve, learning_curve_csv

    _require(cfg, "sizes")
    ds = _load_data(cfg)
    split = _split(cfg, ds)
    rows = learning_curve(split, cfg["sizes"], cfg["models"], ds.latency_unit, cfg["kind"], _boost(cfg),
                          _flow(cfg), cfg["eval_seed"], cfg["rounds"])
    return {"learning_curve.csv": learning_curve_csv(rows)}


def cmd_validate(cfg) -> dict:
    from .pipeline import little_table

    ds = _load_data(cfg)
    clouds = None
    unit = ds.latency_unit
    if cfg["predictions"]:
        if not Path(cfg["predictions"]).is_file():
            raise ConfigError(f"predictions file {cfg['predictions']} does not exist")
        pred = parse_dataset(cfg["predictions"], cfg["kind"])
        unit = pred.latency_unit or unit
        clouds = {g.key: g.points for g in pred.groups}
        missing = [g.key for g in ds.groups if g.key not in clouds]
        groups = [g for g in ds.groups if g.key in clouds]
        if missing:
            log.info("validating %d predicted groups; %d measured groups have no prediction",
                     len(groups), len(missing))
    else:
        groups = list(ds.groups)
    recs = little_records(groups, unit, clouds)
    corr = little_correlation(recs)
    sys.stdout.write(f"pearson={format(corr, '.10g')}\n")
    return {"little_law.csv": little_table(recs, cfg["rel_tol"]),
            "little_correlation.csv": f"source,pearson\n{'predictions' if clouds else 'observations'},"
                                      f"{format(corr, '.10g')}\n"}


HANDLERS = {
    "plan": cmd_plan,
    "oracle": cmd_oracle,
    "ingest-check": cmd_ingest_check,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sample": cmd_sample,
    "learning-curve": cmd_learning_curve,
    "validate": cmd_validate,
}


def _provenance(exc: BaseException) -> str:
    for frame in reversed(traceback.extract_tb(exc.__traceback__)):
        parts = Path(frame.filename).parts
        if "perftwin" in parts:
            return Path(frame.filename).stem
    return "cli"


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, NumericError):
        return 3
    if isinstance(exc, DataError):
        return 2
    return 1


def run(command: str, cfg: dict) -> list:
    """Run one command with a resolved config; returns the paths written."""
    files = HANDLERS[command](cfg)
    stem = f"train_{cfg['model']}" if command == "train" else command
    files[f"{stem}_config.txt"] = format_config(command, cfg)
    out = _out(cfg)
    # every output is computed before anything is written
    for name, text in files.items():
        atomic_write_text(out / name, text)
    return [out / n for n in files]


def main(argv=None) -> int:
    try:
        args = vars(build_parser().parse_args(argv))
        command = args.pop("command", None)
        if command is None:
            raise ConfigError("a command is required; see --help")
        config_path = args.pop("config", None)
        file_values = read_config_file(config_path) if config_path else {}
        cfg = resolve_config(command, file_values, args)
        logging.basicConfig(level=getattr(logging, str(cfg["log_level"]).upper(), logging.INFO),
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        for path in run(command, cfg):
            log.info("wrote %s", path)
        return 0
    except (PerfTwinError, ValueError) as exc:
        sys.stderr.write(f"perftwin: error [{_provenance(exc)}] {type(exc).__name__}: {exc}\n")
        return exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
