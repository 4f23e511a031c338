"""Core value types, parameter ranges and feature encoding.

Measurement clouds are kept as read-only ``(k, 2)`` float arrays whose
columns are ``(iops, latency)``; :class:`PerfPoint` is the scalar view of one
row.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateGroup, NonPositivePerf, SpecValidationError

RANDOM, SEQUENTIAL = "random", "sequential"
READ, WRITE = "read", "write"
LOAD_TYPES = (RANDOM, SEQUENTIAL)
IO_TYPES = (READ, WRITE)

MAX_DISKS = 24
RAID_SCHEMES = ((1, 1), (2, 1), (2, 2), (4, 1), (4, 2), (8, 2))

CACHE_FEATURES = (
    "load_type",
    "io_type",
    "read_fraction",
    "block_size",
    "n_jobs",
    "queue_depth",
    "jobs_times_depth",
)
POOL_FEATURES = CACHE_FEATURES + ("raid_k", "raid_m", "n_disks")


@dataclass(frozen=True)
class KindRanges:
    """Legal parameter values for one dataset kind."""

    name: str
    load_type: str
    block_sizes: tuple
    read_fraction: tuple  # (lo, hi) range, or explicit set when ``pure_only``
    n_jobs: tuple
    queue_depth: tuple
    pool: bool
    pure_only: bool = False

    @property
    def n_features(self) -> int:
        return len(POOL_FEATURES) if self.pool else len(CACHE_FEATURES)

    @property
    def feature_names(self) -> tuple:
        return POOL_FEATURES if self.pool else CACHE_FEATURES


DATASET_KINDS = {
    "cache_random": KindRanges(
        "cache_random", RANDOM, (4, 8, 16, 32, 64, 128, 256), (0, 100), (1, 64), (1, 16), pool=False
    ),
    "ssd_random": KindRanges(
        "ssd_random", RANDOM, (4, 8, 16, 32, 64), (0, 100), (1, 32), (1, 32), pool=True
    ),
    "ssd_sequential": KindRanges(
        "ssd_sequential", SEQUENTIAL, (128, 256, 512, 1024), (0, 100), (1, 20), (1, 32),
        pool=True, pure_only=True,
    ),
    "hdd_sequential": KindRanges(
        "hdd_sequential", SEQUENTIAL, (128, 256, 512, 1024), (0, 100), (1, 20), (1, 32),
        pool=True, pure_only=True,
    ),
}


def kind_ranges(kind: str) -> KindRanges:
    try:
        return DATASET_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {sorted(DATASET_KINDS)}") from None


def min_disks(raid_k: int, raid_m: int) -> int:
    return raid_k + 2 * raid_m


@dataclass(frozen=True)
class WorkloadSpec:
    load_type: str
    io_type: str
    read_fraction: float
    block_size: int
    n_jobs: int
    queue_depth: int
    raid_k: Optional[int] = None
    raid_m: Optional[int] = None
    n_disks: Optional[int] = None

    @property
    def is_pool(self) -> bool:
        return self.raid_k is not None or self.raid_m is not None or self.n_disks is not None

    @property
    def jobs_times_depth(self) -> int:
        return self.n_jobs * self.queue_depth

    def replace(self, **changes) -> "WorkloadSpec":
        return replace(self, **changes)


class PerfPoint(NamedTuple):
    iops: float
    latency: float


def as_points(points) -> np.ndarray:
    """Convert to a read-only, strictly positive ``(k, 2)`` float array."""
    arr = np.array(points, dtype=float).reshape(-1, 2)
    if arr.size and not (np.all(np.isfinite(arr)) and np.all(arr > 0)):
        raise NonPositivePerf("performance values must be finite and strictly positive")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LoadGroup:
    """All per-second measurements of one load for one io type."""

    spec: WorkloadSpec
    load_id: str
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "points", as_points(self.points))
        if len(self.points) < 2:
            raise DegenerateGroup(f"load {self.load_id}/{self.spec.io_type}: need at least 2 points, got {len(self.points)}")

    @property
    def k(self) -> int:
        return len(self.points)

    @property
    def key(self) -> tuple:
        return (self.load_id, self.spec.io_type)

    def __eq__(self, other):
        if not isinstance(other, LoadGroup):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.load_id == other.load_id
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class RangeViolation:
    field: str
    value: object
    legal: str

    def __str__(self):
        return f"{self.field}={self.value!r} outside legal range {self.legal}"


@dataclass(frozen=True)
class MissingField:
    field: str

    def __str__(self):
        return f"missing required field {self.field}"


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def spec_violations(spec: WorkloadSpec, kind: str) -> list:
    """Every constraint of ``kind`` that ``spec`` breaks (empty when valid)."""
    r = kind_ranges(kind)
    out = []

    if spec.load_type != r.load_type:
        out.append(RangeViolation("load_type", spec.load_type, f"{{{r.load_type}}}"))
    if spec.io_type not in IO_TYPES:
        out.append(RangeViolation("io_type", spec.io_type, "{read, write}"))

    rf = spec.read_fraction
    if r.pure_only:
        if rf not in (0, 100):
            out.append(RangeViolation("read_fraction", rf, "{0, 100}"))
    elif not (np.isfinite(rf) and r.read_fraction[0] <= rf <= r.read_fraction[1]):
        out.append(RangeViolation("read_fraction", rf, "[0, 100]"))

    if spec.block_size not in r.block_sizes:
        out.append(RangeViolation("block_size", spec.block_size, str(set(r.block_sizes))))
    for name, (lo, hi) in (("n_jobs", r.n_jobs), ("queue_depth", r.queue_depth)):
        v = getattr(spec, name)
        if not (_is_int(v) and lo <= v <= hi):
            out.append(RangeViolation(name, v, f"[{lo}, {hi}]"))

    raid = ("raid_k", "raid_m", "n_disks")
    if r.pool:
        missing = [name for name in raid if getattr(spec, name) is None]
        out.extend(MissingField(name) for name in missing)
        if not missing:
            scheme = (spec.raid_k, spec.raid_m)
            if scheme not in RAID_SCHEMES:
                out.append(RangeViolation("raid", f"{spec.raid_k}+{spec.raid_m}",
                                          ", ".join(f"{k}+{m}" for k, m in RAID_SCHEMES)))
            else:
                lo = min_disks(*scheme)
                if not (_is_int(spec.n_disks) and lo <= spec.n_disks <= MAX_DISKS):
                    out.append(RangeViolation("n_disks", spec.n_disks, f"[{lo}, {MAX_DISKS}]"))
    else:
        for name in raid:
            if getattr(spec, name) is not None:
                out.append(RangeViolation(name, getattr(spec, name), "absent (cache)"))
    return out


def validate_spec(spec: WorkloadSpec, kind: str) -> WorkloadSpec:
    """Return ``spec`` unchanged or raise :class:`SpecValidationError`."""
    violations = spec_violations(spec, kind)
    if violations:
        raise SpecValidationError(violations)
    return spec


# -- features -----------------------------------------------------------------


def encode_features(spec: WorkloadSpec) -> np.ndarray:
    """Numeric feature vector: 7 components for cache specs, 10 for pools.

    Encodings: random=0, sequential=1; read=0, write=1.
    """
    vec = [
        float(LOAD_TYPES.index(spec.load_type)),
        float(IO_TYPES.index(spec.io_type)),
        float(spec.read_fraction),
        float(spec.block_size),
        float(spec.n_jobs),
        float(spec.queue_depth),
        float(spec.n_jobs * spec.queue_depth),
    ]
    if spec.is_pool:
        vec += [float(spec.raid_k), float(spec.raid_m), float(spec.n_disks)]
    return np.array(vec)


def feature_matrix(groups) -> np.ndarray:
    return np.array([encode_features(g.spec) for g in groups])
