"""Deterministic N-way K-shot episode sampling.

Each episode owns a PCG64 generator seeded with the literal integer sum
``base_seed + episode_index``; composition is a pure function of the pool
content/order and those two integers. Classes are drawn first (uniformly,
without replacement), then K+Q samples per class, the first K forming the
support set. Episode class labels are relabelled to 0..N-1 in class draw
order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import InsufficientClasses, InsufficientSamples
from .rng import episode_rng


@dataclass(frozen=True)
class EpisodeSpec:
    n_way: int
    k_shot: int
    q_query: int
    base_seed: int
    episode_index: int

    def __post_init__(self):
        if self.n_way < 2 or self.k_shot < 1 or self.q_query < 1:
            raise ValueError("need n_way >= 2, k_shot >= 1, q_query >= 1")


@dataclass
class Episode:
    """Support/query items with relabelled classes.

    ``class_map`` maps original class ids to relabelled ids 0..N-1;
    items are whatever the pool lists contain (samples, indices, ...).
    """

    class_map: dict[Any, int]
    support_items: list
    support_labels: np.ndarray
    query_items: list
    query_labels: np.ndarray

    @property
    def original_classes(self) -> list:
        inv = {v: k for k, v in self.class_map.items()}
        return [inv[i] for i in range(len(inv))]


def sample_episode(pool: Mapping[Any, Sequence], spec: EpisodeSpec) -> Episode:
    """Draw one episode from per-class sample lists."""
    class_ids = sorted(pool.keys())
    if len(class_ids) < spec.n_way:
        raise InsufficientClasses(
            f"need {spec.n_way} classes, pool has {len(class_ids)}"
        )
    rng = episode_rng(spec.base_seed, spec.episode_index)
    drawn = rng.choice(len(class_ids), size=spec.n_way, replace=False)
    need = spec.k_shot + spec.q_query
    class_map: dict[Any, int] = {}
    support_items: list = []
    support_labels: list[int] = []
    query_items: list = []
    query_labels: list[int] = []
    for new_label, ci in enumerate(drawn):
        cid = class_ids[int(ci)]
        items = pool[cid]
        if len(items) < need:
            raise InsufficientSamples(
                f"class {cid!r} has {len(items)} samples, episode needs {need}"
            )
        class_map[cid] = new_label
        picks = rng.choice(len(items), size=need, replace=False)
        for j in picks[: spec.k_shot]:
            support_items.append(items[int(j)])
            support_labels.append(new_label)
        for j in picks[spec.k_shot :]:
            query_items.append(items[int(j)])
            query_labels.append(new_label)
    return Episode(
        class_map=class_map,
        support_items=support_items,
        support_labels=np.array(support_labels, dtype=np.int64),
        query_items=query_items,
        query_labels=np.array(query_labels, dtype=np.int64),
    )
