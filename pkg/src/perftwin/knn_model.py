"""Nearest-known-load baseline.

Returns the measured cloud of the training configuration closest to the
query in z-scored feature space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import LoadGroup, encode_features, feature_matrix
from .errors import DimensionMismatch, EmptyTrainingSet

FORMAT = "perftwin-knn"
VERSION = 1


@dataclass(frozen=True, eq=False)
class KnnIndex:
    inputs: np.ndarray  # unique raw feature vectors, first-appearance order
    shift: np.ndarray
    scale: np.ndarray
    clouds: tuple  # measured points per unique input
    kind: str = ""

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    @property
    def standardized(self) -> np.ndarray:
        return (self.inputs - self.shift) / self.scale

    def nearest(self, x) -> int:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_features,):
            raise DimensionMismatch(f"expected {self.n_features} features, got shape {x.shape}")
        d2 = np.square(self.standardized - (x - self.shift) / self.scale).sum(axis=1)
        return int(np.argmin(d2))  # first minimum: lowest index wins ties

    def predict(self, x) -> np.ndarray:
        return self.clouds[self.nearest(x)]

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "kind": self.kind,
            "inputs": self.inputs.tolist(),
            "shift": self.shift.tolist(),
            "scale": self.scale.tolist(),
            "clouds": [c.tolist() for c in self.clouds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnnIndex":
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ValueError("not a supported knn document")
        clouds = []
        for c in d["clouds"]:
            arr = np.array(c, dtype=float).reshape(-1, 2)
            arr.setflags(write=False)
            clouds.append(arr)
        return cls(np.array(d["inputs"], dtype=float), np.array(d["shift"]), np.array(d["scale"]),
                   tuple(clouds), d.get("kind", ""))

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "KnnIndex":
        return cls.from_dict(json.loads(text))


def fit_knn(train: Sequence[LoadGroup], kind: str = "") -> KnnIndex:
    """Index unique training inputs; groups with identical inputs are pooled."""
    if not len(train):
        raise EmptyTrainingSet("kNN needs at least one training group")
    X = feature_matrix(train)
    keys: dict = {}
    for row, g in zip(X, train):
        keys.setdefault(row.tobytes(), (row, []))[1].append(g.points)
    inputs = np.array([row for row, _ in keys.values()])
    clouds = []
    for _, parts in keys.values():
        c = np.concatenate(parts)
        c.setflags(write=False)
        clouds.append(c)
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return KnnIndex(inputs, shift, scale, tuple(clouds), kind)


def predict_knn(index: KnnIndex, x) -> np.ndarray:
    if hasattr(x, "io_type"):
        x = encode_features(x)
    return index.predict(x)
