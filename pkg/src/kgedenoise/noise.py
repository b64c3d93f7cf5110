"""Constrained hard-negative injection and labeled classification sets.

Corruptions replace the head or tail (fair coin) of a uniformly sampled
clean triple with an entity that has already appeared in that slot with
the same relation elsewhere in the training split, which yields
type-plausible "hard" noise. Generated triples never collide with any
known positive nor with each other; ground-truth flags go into the
graph's side label array, which the training path never reads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graph import KnowledgeGraph

logger = logging.getLogger(__name__)

_MAX_ATTEMPTS = 100


@dataclass
class SlotIndex:
    """Distinct heads/tails observed per relation in the training split."""

    heads: dict[int, np.ndarray]
    tails: dict[int, np.ndarray]

    @classmethod
    def from_triples(cls, triples: np.ndarray, n_relations: int) -> "SlotIndex":
        heads, tails = {}, {}
        for r in range(n_relations):
            rows = triples[triples[:, 1] == r]
            heads[r] = np.unique(rows[:, 0])
            tails[r] = np.unique(rows[:, 2])
        return cls(heads, tails)


def _corrupt_once(triple, slot_index: SlotIndex, rng: np.random.Generator):
    """One slot-constrained corruption attempt; None if no candidates."""
    h, r, t = triple
    replace_head = rng.random() < 0.5
    pool = slot_index.heads[r] if replace_head else slot_index.tails[r]
    if len(pool) == 0:
        return None
    candidate = int(pool[rng.integers(len(pool))])
    if replace_head:
        return (candidate, r, t)
    return (h, r, candidate)


def inject_noise(graph: KnowledgeGraph, rate: float, seed: int) -> KnowledgeGraph:
    """Fuse ``floor(rate * |train|)`` labeled hard negatives into train.

    Seed triples are drawn with replacement; each required negative gets
    up to 100 corruption attempts before being skipped (skips are logged
    and the final count may fall short). The positive index of the
    returned graph includes the injected triples, so the learner cannot
    tell them apart.
    """
    if not 0.0 <= rate <= 1.0:
        raise DataError("noise rate must lie in [0, 1]")
    if graph.train_labels.any():
        raise DataError("inject_noise expects a clean training split")

    rng = np.random.default_rng(seed)
    train = graph.train
    target = int(rate * len(train))
    slot_index = SlotIndex.from_triples(train, graph.n_relations)

    taken = set(graph.positive_index)
    injected: list[tuple[int, int, int]] = []
    skipped = 0
    for _ in range(target):
        produced = None
        for _ in range(_MAX_ATTEMPTS):
            source = train[rng.integers(len(train))]
            candidate = _corrupt_once(source, slot_index, rng)
            if candidate is None:
                continue
            code = graph.encode(*candidate)
            if code in taken:
                continue
            produced = candidate
            taken.add(code)
            break
        if produced is None:
            skipped += 1
        else:
            injected.append(produced)

    if skipped:
        logger.warning("noise injection fell short: %d of %d skipped", skipped, target)
    logger.info("injected %d noise triples (target %d)", len(injected), target)

    if injected:
        new_train = np.concatenate([train, np.asarray(injected, dtype=np.int64)])
    else:
        new_train = train.copy()
    labels = np.concatenate([np.zeros(len(train), dtype=bool),
                             np.ones(len(injected), dtype=bool)])
    return graph.with_train(new_train, labels)


def make_classification_negatives(graph: KnowledgeGraph, seed: int):
    """One labeled negative per valid/test positive, same corruption rule.

    Returns ``(valid_triples, valid_labels, test_triples, test_labels)``
    where labels are +1/-1 and each positive is immediately followed by
    its negative. Positives whose corruption attempts all fail are kept
    without a counterpart (logged), so counts may fall short of 2n.
    """
    rng = np.random.default_rng(seed)
    slot_index = SlotIndex.from_triples(graph.train, graph.n_relations)

    def build(split: np.ndarray):
        rows, labels = [], []
        skipped = 0
        for triple in split:
            rows.append(tuple(int(x) for x in triple))
            labels.append(1)
            negative = None
            for _ in range(_MAX_ATTEMPTS):
                candidate = _corrupt_once(triple, slot_index, rng)
                if candidate is None:
                    continue
                if graph.encode(*candidate) in graph.positive_index:
                    continue
                negative = candidate
                break
            if negative is None:
                skipped += 1
                continue
            rows.append(negative)
            labels.append(-1)
        if skipped:
            logger.warning("classification negatives: %d positives left unmatched", skipped)
        arr = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
        return arr, np.asarray(labels, dtype=np.int64)

    valid_triples, valid_labels = build(graph.valid)
    test_triples, test_labels = build(graph.test)
    return valid_triples, valid_labels, test_triples, test_labels


def write_noise_labels(path, labels: np.ndarray) -> None:
    """Sidecar file: one 0/1 per train line, 1 marking injected noise."""
    with open(path, "w", encoding="utf-8") as handle:
        for flag in labels:
            handle.write(f"{int(flag)}\n")


def load_noise_labels(path, expected: int | None = None) -> np.ndarray:
    values = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            if text not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: labels must be 0 or 1")
            values.append(text == "1")
    labels = np.asarray(values, dtype=bool)
    if expected is not None and len(labels) != expected:
        raise DataError(
            f"{path}: {len(labels)} labels for {expected} training triples"
        )
    return labels
