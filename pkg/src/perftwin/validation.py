"""Little's-law checks on observed or predicted clouds, and a synthetic oracle.

For one load with queue depth Q and J jobs, ``Q * J`` outstanding requests
should equal ``IOPS_read * Latency_read + IOPS_write * Latency_write`` built
from per-io-type means.  Latency must be converted to seconds for the
product to be a request count, so every dataset needs a latency unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .domain import IO_TYPES, LoadGroup, WorkloadSpec
from .errors import UnitUnknown
from .ingest import Dataset, groups_by_load
from .metrics import pearson

UNIT_SECONDS = {"s": 1.0, "sec": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9}
DEFAULT_REL_TOL = 0.3


def unit_factor(unit: Optional[str]) -> float:
    if unit is None or unit not in UNIT_SECONDS:
        raise UnitUnknown(f"latency unit {unit!r} is not one of {sorted(UNIT_SECONDS)}")
    return UNIT_SECONDS[unit]


@dataclass(frozen=True)
class LittleRecord:
    load_id: str
    lhs: float
    rhs: float

    @property
    def residual(self) -> float:
        return self.rhs - self.lhs

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / max(self.lhs, 1e-300)


def little_record(queue_depth: int, n_jobs: int, read_points=None, write_points=None,
                  latency_unit: Optional[str] = "s", load_id: str = "") -> LittleRecord:
    """Both sides of Little's law for one load; a missing io type adds nothing."""
    factor = unit_factor(latency_unit)
    rhs = 0.0
    for pts in (read_points, write_points):
        if pts is None:
            continue
        pts = np.asarray(pts, dtype=float)
        rhs += float(pts[:, 0].mean() * pts[:, 1].mean() * factor)
    return LittleRecord(load_id, float(queue_depth * n_jobs), rhs)


def little_records(groups: Sequence[LoadGroup], latency_unit: Optional[str],
                   clouds: Optional[Mapping] = None) -> list:
    """One record per load id, pairing read and write groups.

    ``clouds`` maps ``(load_id, io_type)`` to predicted points that replace
    the measured ones.
    """
    out = []
    for load_id, by_io in groups_by_load(groups).items():
        spec = next(iter(by_io.values())).spec
        pts = {}
        for io in IO_TYPES:
            if io in by_io:
                pts[io] = clouds[(load_id, io)] if clouds is not None else by_io[io].points
        out.append(little_record(spec.queue_depth, spec.n_jobs, pts.get("read"), pts.get("write"),
                                 latency_unit, load_id))
    return out


def reliability_filter(records: Sequence[LittleRecord], rel_tol: float = DEFAULT_REL_TOL):
    """Split records into (accepted, rejected) by relative law residual."""
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    accepted, rejected = [], []
    for r in records:
        (accepted if abs(r.rhs - r.lhs) <= rel_tol * max(r.lhs, 1e-300) else rejected).append(r)
    return accepted, rejected


def little_correlation(records: Sequence[LittleRecord]) -> float:
    return pearson([r.lhs for r in records], [r.rhs for r in records])


# -- synthetic oracle ---------------------------------------------------------


@dataclass(frozen=True)
class OracleConfig:
    """Parameters of the synthetic storage response.

    For a load with ``N = Q * J`` outstanding requests, block size ``b`` KB
    and read fraction ``f``:

    * capacity ``C = base_iops / (1 + b / block_ref_kb)``, times
      ``(n_eff / 8) ** disk_exponent`` for pools with
      ``n_eff = n_disks * K / (K + M)``;
    * throughput in read-equivalent operations ``T = C * N / (N + half_saturation)``;
    * a write costs ``w`` reads: ``cache_write_cost`` for cache,
      ``1 + M`` for RAID pools;
    * stream shares ``a_r = (1 + 3 f) / 4`` and ``a_w = (1 + 3 (1 - f)) / 4``
      (zero for an absent stream at f = 0 or 1);
    * ``IOPS_read = a_r T``, ``IOPS_write = a_w T / w``;
    * ``Latency_read = N / (IOPS_read + w IOPS_write)`` seconds and
      ``Latency_write = w Latency_read``.

    These satisfy Little's law exactly.  Per-second points are log-normal with
    the above means, log-IOPS std ``noise * (1 + 2 / sqrt(N))``, log-latency
    std ``latency_noise_ratio`` times that, and log-log correlation ``rho``.
    """

    base_iops: float = 2.0e5
    block_ref_kb: float = 16.0
    half_saturation: float = 32.0
    cache_write_cost: float = 1.5
    disk_exponent: float = 0.7
    noise: float = 0.05
    latency_noise_ratio: float = 1.2
    rho: float = -0.8
    latency_unit: str = "s"
    seed: int = 0

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        if not self.noise > 0:
            raise ValueError("noise scale must be positive")
        unit_factor(self.latency_unit)


def oracle_means(spec: WorkloadSpec, cfg: OracleConfig = OracleConfig()) -> tuple:
    """Expected (iops, latency in cfg.latency_unit) for one spec."""
    n = spec.queue_depth * spec.n_jobs
    cap = cfg.base_iops / (1.0 + spec.block_size / cfg.block_ref_kb)
    if spec.is_pool:
        n_eff = spec.n_disks * spec.raid_k / (spec.raid_k + spec.raid_m)
        cap *= (n_eff / 8.0) ** cfg.disk_exponent
        w = 1.0 + spec.raid_m
    else:
        w = cfg.cache_write_cost
    thr = cap * n / (n + cfg.half_saturation)
    f = spec.read_fraction / 100.0
    share_r = (1.0 + 3.0 * f) / 4.0 if f > 0 else 0.0
    share_w = (1.0 + 3.0 * (1.0 - f)) / 4.0 if f < 1 else 0.0
    iops_r, iops_w = share_r * thr, share_w * thr / w
    lat_r = n / (iops_r + w * iops_w)
    if spec.io_type == "read":
        iops, latency = iops_r, lat_r
    else:
        iops, latency = iops_w, w * lat_r
    return iops, latency / unit_factor(cfg.latency_unit)


def oracle_log_std(spec: WorkloadSpec, cfg: OracleConfig = OracleConfig()) -> tuple:
    s = cfg.noise * (1.0 + 2.0 / math.sqrt(spec.queue_depth * spec.n_jobs))
    return s, s * cfg.latency_noise_ratio


def oracle_points(spec: WorkloadSpec, k: int, rng, cfg: OracleConfig = OracleConfig()) -> np.ndarray:
    iops, lat = oracle_means(spec, cfg)
    s1, s2 = oracle_log_std(spec, cfg)
    cov = np.array([[s1 * s1, cfg.rho * s1 * s2], [cfg.rho * s1 * s2, s2 * s2]])
    # shift log-means so the arithmetic means hit the targets
    mu = np.array([math.log(iops) - 0.5 * s1 * s1, math.log(lat) - 0.5 * s2 * s2])
    e = rng.standard_normal((k, 2))
    z = mu + e @ np.linalg.cholesky(cov).T
    return np.exp(z)


def generate_oracle_dataset(plan, cfg: OracleConfig = OracleConfig(), k: int = 120,
                            kind: str = "cache_random") -> Dataset:
    """Synthetic measurements for every entry of a workload plan.

    Each load draws from its own generator seeded by ``(cfg.seed, load index)``.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    load_index = {}
    groups = []
    for entry in plan:
        idx = load_index.setdefault(entry.load_id, len(load_index))
        io = IO_TYPES.index(entry.spec.io_type)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, idx, io]))
        groups.append(LoadGroup(entry.spec, entry.load_id, oracle_points(entry.spec, k, rng, cfg)))
    return Dataset(kind, tuple(groups), cfg.latency_unit)
