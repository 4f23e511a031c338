"""Per-load prediction quality metrics and bootstrap aggregation.

All functions take ``(k, 2)`` arrays of (iops, latency).  FD and MMD are
meant to be computed on samples standardised with a scaler fitted on the
observations only (see :func:`scaled_pair`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DegenerateSample, EmptyInput, ZeroBandwidth, ZeroMean, ZeroStd

METRIC_NAMES = ("pem_iops", "pem_lat", "pes_iops", "pes_lat", "fd", "mmd")


def _pts(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, a.shape[-1] if a.ndim > 1 else 1) if a.ndim != 2 else a


def pem(obs, pred) -> np.ndarray:
    """Percentage error of the mean, per dimension."""
    obs, pred = _pts(obs), _pts(pred)
    if not len(obs) or not len(pred):
        raise DegenerateSample("PEM needs non-empty samples")
    mu = obs.mean(axis=0)
    if np.any(mu == 0):
        raise ZeroMean("observed mean is zero")
    return np.abs(pred.mean(axis=0) - mu) / np.abs(mu) * 100.0


def pes(obs, pred) -> np.ndarray:
    """Percentage error of the Bessel-corrected standard deviation."""
    obs, pred = _pts(obs), _pts(pred)
    if len(obs) < 2 or len(pred) < 2:
        raise DegenerateSample("PES needs at least 2 points per sample")
    sd = obs.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise ZeroStd("observed standard deviation is zero")
    return np.abs(pred.std(axis=0, ddof=1) - sd) / sd * 100.0


@dataclass(frozen=True)
class ScalerParams:
    mean: np.ndarray
    scale: np.ndarray


def fit_scaler(obs) -> ScalerParams:
    """Per-dimension mean and population std; a zero std becomes unit scale."""
    obs = _pts(obs)
    sd = obs.std(axis=0)
    return ScalerParams(obs.mean(axis=0), np.where(sd > 0, sd, 1.0))


def apply_scaler(p: ScalerParams, points) -> np.ndarray:
    return (_pts(points) - p.mean) / p.scale


def scaled_pair(obs, pred):
    p = fit_scaler(obs)
    return apply_scaler(p, obs), apply_scaler(p, pred)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_from_moments(mu1, cov1, mu2, cov2) -> float:
    """``|mu1-mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))`` via ``S1^(1/2) S2 S1^(1/2)``."""
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    cov1, cov2 = np.atleast_2d(cov1), np.atleast_2d(cov2)
    r1 = _psd_sqrt(cov1)
    cross = _psd_sqrt(r1 @ cov2 @ r1)
    fd = float(np.sum((mu1 - mu2) ** 2) + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(cross))
    return max(fd, 0.0)


def frechet_distance(obs_scaled, pred_scaled) -> float:
    a, b = _pts(obs_scaled), _pts(pred_scaled)
    if len(a) < 2 or len(b) < 2:
        raise DegenerateSample("FD needs at least 2 points per sample")
    return frechet_from_moments(a.mean(axis=0), np.cov(a, rowvar=False, ddof=1),
                                b.mean(axis=0), np.cov(b, rowvar=False, ddof=1))


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # explicit differences keep d(u, v) == d(v, u) bit for bit
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def median_bandwidth(a, b) -> float:
    """Median pairwise distance over the combined sample (distinct pairs).

    If more than half of the pairs coincide the median of the non-zero
    distances is used instead.
    """
    both = np.concatenate([_pts(a), _pts(b)])
    if len(both) < 2:
        raise DegenerateSample("MMD needs at least 2 points in total")
    iu = np.triu_indices(len(both), k=1)
    d = np.sqrt(_sqdist(both, both)[iu])
    sigma = float(np.median(d))
    if sigma == 0.0:
        nz = d[d > 0]
        if not len(nz):
            raise ZeroBandwidth("all points identical; RBF bandwidth is zero")
        sigma = float(np.median(nz))
    return sigma


def mmd_rbf(obs_scaled, pred_scaled, sigma=None) -> float:
    """Biased (V-statistic) squared MMD with a unit-weight RBF kernel.

    Kernel sums use ``math.fsum`` so the result does not depend on point
    order and is exactly zero for two copies of the same multiset.
    """
    a, b = _pts(obs_scaled), _pts(pred_scaled)
    if not len(a) or not len(b):
        raise DegenerateSample("MMD needs non-empty samples")
    if sigma is None:
        sigma = median_bandwidth(a, b)
    g = 1.0 / (2.0 * sigma * sigma)
    kxx = math.fsum(np.exp(-g * _sqdist(a, a)).ravel())
    kyy = math.fsum(np.exp(-g * _sqdist(b, b)).ravel())
    kxy = math.fsum(np.exp(-g * _sqdist(a, b)).ravel())
    n, m = len(a), len(b)
    return max(kxx / (n * n) + kyy / (m * m) - 2.0 * kxy / (n * m), 0.0)


def load_metrics(obs, pred) -> dict:
    """All six metrics for one load; FD and MMD on observation-scaled data."""
    pm, ps = pem(obs, pred), pes(obs, pred)
    so, sp = scaled_pair(obs, pred)
    return {
        "pem_iops": float(pm[0]),
        "pem_lat": float(pm[1]),
        "pes_iops": float(ps[0]),
        "pes_lat": float(ps[1]),
        "fd": frechet_distance(so, sp),
        "mmd": mmd_rbf(so, sp),
    }


@dataclass(frozen=True)
class BootstrapSummary:
    mean: float
    std: float
    rounds: int
    seed: int


def bootstrap_summary(values, rounds: int = 100, seed: int = 0) -> BootstrapSummary:
    """Mean and std of ``rounds`` resample-with-replacement means.

    Draws use ``numpy.random.default_rng(seed)``.
    """
    v = np.asarray(values, dtype=float).ravel()
    if not len(v):
        raise EmptyInput("bootstrap needs at least one value")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(v), size=(rounds, len(v)))
    means = v[idx].mean(axis=1)
    return BootstrapSummary(float(means.mean()), float(means.std()), rounds, seed)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) != len(b) or len(a) < 2:
        raise DegenerateInput("pearson needs two equal-length sequences of at least 2 values")
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = float(da @ da), float(db @ db)
    if saa == 0 or sbb == 0:
        raise DegenerateInput("pearson undefined for a constant sequence")
    r = float(da @ db) / math.sqrt(saa * sbb)
    return min(1.0, max(-1.0, r))
