"""Measurement dataset CSV parsing, serialization and train/test splitting.

File layout (UTF-8)::

    # latency_unit=ms                      <- optional comment line(s)
    load_id,load_type,io_type,read_fraction,block_size_kb,n_jobs,queue_depth,raid_k,raid_m,n_disks,second,iops,latency
    L0001,random,read,64.0,32,4,8,,,,1,3125.2,0.0102
    ...

``raid_k``, ``raid_m`` and ``n_disks`` are empty for cache datasets.  Read and
write measurements of one load are separate rows told apart by ``io_type``.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .domain import LoadGroup, WorkloadSpec, kind_ranges, spec_violations
from .errors import DegenerateGroup, ParseError, SchemaError, SpecValidationError, TooFewLoads

COLUMNS = (
    "load_id",
    "load_type",
    "io_type",
    "read_fraction",
    "block_size_kb",
    "n_jobs",
    "queue_depth",
    "raid_k",
    "raid_m",
    "n_disks",
    "second",
    "iops",
    "latency",
)
UNIT_PREFIX = "latency_unit="


@dataclass(frozen=True)
class Dataset:
    kind: str
    groups: tuple
    latency_unit: Optional[str] = None

    @property
    def n_points(self) -> int:
        return sum(g.k for g in self.groups)

    def load_ids(self) -> list:
        """Distinct load ids in order of first appearance."""
        return list(dict.fromkeys(g.load_id for g in self.groups))


@dataclass(frozen=True)
class SplitDataset:
    train: tuple
    test: tuple
    seed: int
    test_load_ids: tuple

    @property
    def train_load_ids(self) -> list:
        return list(dict.fromkeys(g.load_id for g in self.train))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_number(text: str, line: int, name: str, cast):
    try:
        return cast(text)
    except ValueError:
        raise ParseError(line, f"column {name}: cannot parse {text!r} as {cast.__name__}") from None


def _parse_int(text: str, line: int, name: str) -> int:
    value = _parse_number(text, line, name, float)
    if not float(value).is_integer():
        raise ParseError(line, f"column {name}: expected an integer, got {text!r}")
    return int(value)


def _read_header(lines: list) -> tuple:
    """Skip leading comments; return (latency_unit, index of header line)."""
    unit = None
    for i, raw in enumerate(lines):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if body.startswith(UNIT_PREFIX):
                unit = body[len(UNIT_PREFIX):].strip() or None
            continue
        return unit, i
    raise SchemaError("missing header row")


def parse_dataset(path, kind: str) -> Dataset:
    """Parse an ingest-schema CSV into a :class:`Dataset` of ``kind``."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_dataset_text(text, kind)


def parse_dataset_text(text: str, kind: str) -> Dataset:
    ranges = kind_ranges(kind)
    lines = text.splitlines()
    unit, header_at = _read_header(lines)

    header = next(csv.reader([lines[header_at]]))
    header = [h.strip() for h in header]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    if tuple(header) != COLUMNS:
        raise SchemaError(f"columns must be exactly {','.join(COLUMNS)}")

    specs: dict = {}
    rows: dict = {}
    first_line: dict = {}
    reader = csv.reader(lines[header_at + 1:])
    for offset, fields in enumerate(reader):
        line = header_at + 2 + offset
        if not fields or (len(fields) == 1 and not fields[0].strip()):
            continue
        if fields[0].lstrip().startswith("#"):
            continue
        if len(fields) != len(COLUMNS):
            raise ParseError(line, f"expected {len(COLUMNS)} fields, got {len(fields)}")
        rec = dict(zip(COLUMNS, (f.strip() for f in fields)))

        optional = ("raid_k", "raid_m", "n_disks") if not ranges.pool else ()
        for name in COLUMNS:
            if name not in optional and rec[name] == "":
                raise ParseError(line, f"missing value in column {name}")

        raid = [None if rec[c] == "" else _parse_int(rec[c], line, c) for c in ("raid_k", "raid_m", "n_disks")]
        spec = WorkloadSpec(
            load_type=rec["load_type"],
            io_type=rec["io_type"],
            read_fraction=_parse_number(rec["read_fraction"], line, "read_fraction", float),
            block_size=_parse_int(rec["block_size_kb"], line, "block_size_kb"),
            n_jobs=_parse_int(rec["n_jobs"], line, "n_jobs"),
            queue_depth=_parse_int(rec["queue_depth"], line, "queue_depth"),
            raid_k=raid[0],
            raid_m=raid[1],
            n_disks=raid[2],
        )
        _parse_int(rec["second"], line, "second")
        iops = _parse_number(rec["iops"], line, "iops", float)
        lat = _parse_number(rec["latency"], line, "latency", float)
        if not (np.isfinite(iops) and iops > 0):
            raise ParseError(line, f"iops must be positive, got {rec['iops']}")
        if not (np.isfinite(lat) and lat > 0):
            raise ParseError(line, f"latency must be positive, got {rec['latency']}")

        key = (rec["load_id"], spec.io_type)
        if key not in specs:
            violations = spec_violations(spec, kind)
            if violations:
                err = SpecValidationError(violations)
                err.line = line
                err.args = (f"line {line}: {err}",)
                raise err
            specs[key] = spec
            rows[key] = []
            first_line[key] = line
        elif specs[key] != spec:
            raise ParseError(line, f"load {key[0]}/{key[1]} changes its parameters mid-group")
        rows[key].append((iops, lat))

    groups = []
    for key, spec in specs.items():
        try:
            groups.append(LoadGroup(spec, key[0], np.array(rows[key])))
        except DegenerateGroup as exc:
            raise ParseError(first_line[key], str(exc)) from None
    return Dataset(kind, tuple(groups), unit)


def dataset_rows(groups: Iterable[LoadGroup]):
    for g in groups:
        s = g.spec
        prefix = [g.load_id, s.load_type, s.io_type, _fmt(float(s.read_fraction)), s.block_size,
                  s.n_jobs, s.queue_depth, _fmt(s.raid_k), _fmt(s.raid_m), _fmt(s.n_disks)]
        for i, (iops, lat) in enumerate(g.points, start=1):
            yield prefix + [i, repr(float(iops)), repr(float(lat))]


def format_dataset(groups: Iterable[LoadGroup], latency_unit: Optional[str] = None) -> str:
    buf = io.StringIO()
    if latency_unit:
        buf.write(f"# {UNIT_PREFIX}{latency_unit}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    w.writerows(dataset_rows(groups))
    return buf.getvalue()


def format_plan(entries) -> str:
    """Planned loads in the dataset schema with empty measurement columns."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for e in entries:
        s = e.spec
        w.writerow([e.load_id, s.load_type, s.io_type, _fmt(float(s.read_fraction)), s.block_size,
                    s.n_jobs, s.queue_depth, _fmt(s.raid_k), _fmt(s.raid_m), _fmt(s.n_disks), "", "", ""])
    return buf.getvalue()


def write_dataset(ds: Dataset, path) -> None:
    atomic_write_text(path, format_dataset(ds.groups, ds.latency_unit))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def split_train_test(ds: Dataset, n_test_loads: int, seed: int) -> SplitDataset:
    """Hold out ``n_test_loads`` whole load configurations (all io types).

    Selection uses ``numpy.random.default_rng(seed)`` (PCG64) drawing without
    replacement from load ids in file order.
    """
    ids = ds.load_ids()
    if n_test_loads < 0 or (n_test_loads > 0 and n_test_loads >= len(ids)):
        raise TooFewLoads(f"cannot hold out {n_test_loads} of {len(ids)} load configurations")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(ids), size=n_test_loads, replace=False) if n_test_loads else []
    test_ids = {ids[i] for i in picked}
    train = tuple(g for g in ds.groups if g.load_id not in test_ids)
    test = tuple(g for g in ds.groups if g.load_id in test_ids)
    ordered = tuple(i for i in ids if i in test_ids)
    return SplitDataset(train, test, seed, ordered)


def group_stats(g) -> tuple:
    """Sample mean and Bessel-corrected std of (iops, latency)."""
    pts = g.points if isinstance(g, LoadGroup) else np.asarray(g, dtype=float)
    if len(pts) < 2:
        raise DegenerateGroup(f"need at least 2 points, got {len(pts)}")
    return pts.mean(axis=0), pts.std(axis=0, ddof=1)


def groups_by_load(groups: Sequence[LoadGroup]) -> dict:
    """``load_id -> {io_type: group}`` preserving first-appearance order."""
    out: dict = {}
    for g in groups:
        out.setdefault(g.load_id, {})[g.spec.io_type] = g
    return out
