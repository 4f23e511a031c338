"""Quasi-random workload planning over the dataset parameter ranges."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .domain import RAID_SCHEMES, MAX_DISKS, WorkloadSpec, kind_ranges, min_disks, validate_spec
from .errors import DimensionUnsupported

# scipy ships the Joe & Kuo (2008) "new-joe-kuo-6.21201" direction numbers.
MAX_SOBOL_DIM = 21201


def sobol_points(dim: int, n: int, skip: int = 1) -> np.ndarray:
    """First ``n`` unscrambled Sobol points in ``[0, 1)^dim`` after dropping ``skip``."""
    if dim < 1 or dim > MAX_SOBOL_DIM:
        raise DimensionUnsupported(f"Sobol dimension must be in [1, {MAX_SOBOL_DIM}], got {dim}")
    if n < 0 or skip < 0:
        raise ValueError("n and skip must be non-negative")
    if n == 0:
        return np.empty((0, dim))
    engine = qmc.Sobol(d=dim, scramble=False)
    if skip:
        engine.fast_forward(skip)
    with warnings.catch_warnings():
        # balance-property warning for non power-of-two n
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(n)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def disk_grid(raid_k: int, raid_m: int) -> tuple:
    """Minimum pool size, three evenly spaced interior sizes, and the maximum."""
    lo, hi = min_disks(raid_k, raid_m), MAX_DISKS
    return tuple([lo] + [round_half_up(lo + (hi - lo) * i / 4) for i in (1, 2, 3)] + [hi])


@dataclass(frozen=True)
class Continuous:
    name: str
    lo: float
    hi: float

    def map(self, u: float) -> float:
        return float(self.lo + u * (self.hi - self.lo))


@dataclass(frozen=True)
class Integer:
    name: str
    lo: int
    hi: int

    def map(self, u: float) -> int:
        return min(max(round_half_up(self.lo + u * (self.hi - self.lo)), self.lo), self.hi)


@dataclass(frozen=True)
class Categorical:
    name: str
    values: tuple

    def map(self, u: float):
        return self.values[min(int(math.floor(u * len(self.values))), len(self.values) - 1)]


@dataclass(frozen=True)
class ParameterSpace:
    kind: str
    load_type: str
    axes: tuple
    raid_schemes: Optional[tuple] = None

    @property
    def dim(self) -> int:
        return len(self.axes) + (2 if self.raid_schemes else 0)

    def __post_init__(self):
        for ax in self.axes:
            if isinstance(ax, Categorical) and not ax.values:
                raise ValueError(f"axis {ax.name} has no values")
            if isinstance(ax, (Continuous, Integer)) and ax.lo > ax.hi:
                raise ValueError(f"axis {ax.name} has an empty range")
        if self.raid_schemes is not None and not self.raid_schemes:
            raise ValueError("raid scheme set is empty")


def parameter_space(kind: str) -> ParameterSpace:
    r = kind_ranges(kind)
    rf = Categorical("read_fraction", (0.0, 100.0)) if r.pure_only else Continuous("read_fraction", *r.read_fraction)
    axes = (
        Categorical("block_size", r.block_sizes),
        rf,
        Integer("n_jobs", *r.n_jobs),
        Integer("queue_depth", *r.queue_depth),
    )
    return ParameterSpace(kind, r.load_type, axes, RAID_SCHEMES if r.pool else None)


@dataclass(frozen=True)
class PlanEntry:
    load_id: str
    spec: WorkloadSpec


def io_types_for(read_fraction: float) -> tuple:
    """io types a load produces: no read stream at 0 %, no write stream at 100 %."""
    out = []
    if read_fraction > 0:
        out.append("read")
    if read_fraction < 100:
        out.append("write")
    return tuple(out)


def plan_workloads(space: ParameterSpace, n: int, skip: int = 1, id_prefix: str = "L") -> tuple:
    """Map ``n`` Sobol points onto ``space``; one entry per (load, io type)."""
    pts = sobol_points(space.dim, n, skip)
    plan = []
    for i, u in enumerate(pts):
        values = {ax.name: ax.map(u[j]) for j, ax in enumerate(space.axes)}
        raid = {}
        if space.raid_schemes:
            k, m = Categorical("raid", space.raid_schemes).map(u[len(space.axes)])
            disks = Categorical("n_disks", disk_grid(k, m)).map(u[len(space.axes) + 1])
            raid = dict(raid_k=k, raid_m=m, n_disks=disks)
        load_id = f"{id_prefix}{i + 1:05d}"
        for io in io_types_for(values["read_fraction"]):
            spec = WorkloadSpec(load_type=space.load_type, io_type=io, **values, **raid)
            plan.append(PlanEntry(load_id, validate_spec(spec, space.kind)))
    return tuple(plan)


def plan_specs(plan: Sequence[PlanEntry]) -> list:
    return [e.spec for e in plan]
