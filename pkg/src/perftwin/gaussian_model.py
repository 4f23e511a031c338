"""Parametric conditional model: a 2-D Gaussian over log performance.

Each training load is summarised by the mean ``mu`` of ``z = (ln iops,
ln latency)`` and the Cholesky factor ``L`` of its inverse covariance
(``inv(Sigma) = L @ L.T``).  One 5-output boosted ensemble maps features to
``(mu_1, mu_2, ln L_11, L_21, ln L_22)``; the log on the diagonal keeps every
predicted precision matrix positive definite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .boosting import BoostParams, TreeEnsemble, fit_ensemble
from .domain import LoadGroup, encode_features, feature_matrix
from .errors import DegenerateGroup, DimensionMismatch, EmptyTrainingSet, NonPositivePerf

FORMAT = "perftwin-gaussian"
VERSION = 1
JITTER = 1e-9


@dataclass(frozen=True)
class GaussianTargets:
    mu: np.ndarray
    L: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.linalg.inv(self.L @ self.L.T)

    def as_vector(self) -> np.ndarray:
        """Regression targets ``(mu_1, mu_2, ln L_11, L_21, ln L_22)``."""
        L = self.L
        return np.array([self.mu[0], self.mu[1], np.log(L[0, 0]), L[1, 0], np.log(L[1, 1])])


@dataclass(frozen=True)
class GaussianPrediction:
    mu: np.ndarray
    sigma: np.ndarray
    L: np.ndarray  # precision factor, inv(sigma) = L @ L.T


def jitter_for(cov: np.ndarray, eps: float = JITTER) -> float:
    return eps * max(float(np.max(np.diag(cov))), 1.0)


def targets_from_moments(mu, cov, eps: float = JITTER) -> GaussianTargets:
    cov = np.asarray(cov, dtype=float) + jitter_for(cov, eps) * np.eye(2)
    L = np.linalg.cholesky(np.linalg.inv(cov))
    return GaussianTargets(np.asarray(mu, dtype=float), L)


def prepare_targets(g, eps: float = JITTER) -> GaussianTargets:
    """Log-space mean and precision Cholesky factor of one load."""
    pts = g.points if isinstance(g, LoadGroup) else np.asarray(g, dtype=float)
    if len(pts) < 2:
        raise DegenerateGroup(f"need at least 2 points, got {len(pts)}")
    if not np.all(pts > 0):
        raise NonPositivePerf("performance values must be strictly positive")
    z = np.log(pts)
    return targets_from_moments(z.mean(axis=0), np.cov(z, rowvar=False, ddof=1), eps)


def outputs_to_prediction(out) -> GaussianPrediction:
    out = np.asarray(out, dtype=float)
    L = np.array([[np.exp(out[2]), 0.0], [out[3], np.exp(out[4])]])
    # inv(L L^T) = inv(L)^T inv(L)
    Linv = np.array([[1.0 / L[0, 0], 0.0], [-L[1, 0] / (L[0, 0] * L[1, 1]), 1.0 / L[1, 1]]])
    sigma = Linv.T @ Linv
    sigma = 0.5 * (sigma + sigma.T)
    return GaussianPrediction(out[:2].copy(), sigma, L)


@dataclass(frozen=True, eq=False)
class GaussianModel:
    ensemble: TreeEnsemble
    n_features: int
    kind: str = ""
    eps: float = JITTER

    def predict_outputs(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return self.ensemble.predict(X)

    def predict(self, x) -> GaussianPrediction:
        return outputs_to_prediction(self.predict_outputs(x)[0])

    def predict_many(self, X) -> list:
        return [outputs_to_prediction(o) for o in self.predict_outputs(X)]

    def sample(self, x, n: int, seed=None) -> np.ndarray:
        return sample_from_prediction(self.predict(x), n, seed)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "kind": self.kind,
            "n_features": self.n_features,
            "eps": self.eps,
            "ensemble": self.ensemble.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianModel":
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ValueError("not a supported gaussian model document")
        return cls(TreeEnsemble.from_dict(d["ensemble"]), d["n_features"], d["kind"], d["eps"])

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "GaussianModel":
        return cls.from_dict(json.loads(text))


def fit_gaussian_model(train: Sequence[LoadGroup], params: BoostParams = BoostParams(),
                       kind: str = "", eps: float = JITTER) -> GaussianModel:
    if len(train) < 2:
        raise EmptyTrainingSet(f"need at least 2 training loads, got {len(train)}")
    X = feature_matrix(train)
    Y = np.array([prepare_targets(g, eps).as_vector() for g in train])
    return GaussianModel(fit_ensemble(X, Y, params), X.shape[1], kind, eps)


def predict_distribution(model: GaussianModel, x) -> GaussianPrediction:
    return model.predict(x)


def sample_from_prediction(pred: GaussianPrediction, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` (iops, latency) points from ``exp(N(mu, sigma))``."""
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n, 2))
    # z = mu + inv(L)^T e  has covariance inv(L L^T)
    z = pred.mu + np.linalg.solve(pred.L.T, eps.T).T if n else np.empty((0, 2))
    return np.exp(z)


def sample_performance(model: GaussianModel, x, n: int, seed=None) -> np.ndarray:
    if hasattr(x, "io_type"):
        x = encode_features(x)
    return model.sample(x, n, seed)
