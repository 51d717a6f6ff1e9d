"""Bridges dataset pools to dense feature matrices for episodes."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import Sample
from .errors import ShapeError
from .geometry import FEATURE_DIMS, featurize


@dataclass
class FeaturePool:
    """Feature matrix plus per-class row indices.

    Row order is deterministic: ascending class id, catalog sample order
    within each class, so episode composition depends only on the catalog
    and the episode seed.
    """

    X: np.ndarray
    pool: dict[int, list[int]]
    paths: list[str]
    representation: str
    normalize: bool
    class_names: dict[int, str] | None = None

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def build_feature_pool(
    sample_pool: dict[int, list[Sample]],
    root,
    representation: str,
    normalize: bool = True,
    class_names: dict[int, str] | None = None,
) -> FeaturePool:
    if representation not in FEATURE_DIMS:
        raise ShapeError(f"unknown representation {representation!r}")
    dim = FEATURE_DIMS[representation]
    rows: list[np.ndarray] = []
    paths: list[str] = []
    index_pool: dict[int, list[int]] = {}
    root = Path(root)
    for class_id in sorted(sample_pool):
        indices = []
        for sample in sample_pool[class_id]:
            kp = sample.load(root)
            rows.append(featurize(kp, representation, normalize=normalize).values)
            paths.append(sample.path)
            indices.append(len(rows) - 1)
        index_pool[class_id] = indices
    X = np.vstack(rows) if rows else np.empty((0, dim))
    return FeaturePool(X, index_pool, paths, representation, normalize, class_names)
