"""Dataset model: vocabularies, splits, TSV ingestion and the positive index.

Triple files are UTF-8 text with one ``head<TAB>relation<TAB>tail`` fact
per line. Vocabulary ids are assigned by first appearance while reading
train, then valid, then test, which makes loading fully deterministic.
Ground-truth noise flags for the training split live in a side array
(``train_labels``) that no training code reads; only the evaluation layer
may consult it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class LabeledTriple(NamedTuple):
    triple: Triple
    is_noise: bool


class Vocabulary:
    """Bijective string<->id map; ids are assigned in insertion order."""

    def __init__(self, names: Iterable[str] = ()):
        self.names: list[str] = []
        self._ids: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        existing = self._ids.get(name)
        if existing is not None:
            return existing
        new_id = len(self.names)
        self.names.append(name)
        self._ids[name] = new_id
        return new_id

    def id_of(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise DataError(f"unknown vocabulary entry: {name!r}") from None

    def name_of(self, idx: int) -> str:
        return self.names[idx]

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self.names)


@dataclass
class LoadReport:
    """Counts gathered while reading the three split files."""

    raw_lines: dict[str, int] = field(default_factory=dict)
    kept: dict[str, int] = field(default_factory=dict)
    duplicates: dict[str, int] = field(default_factory=dict)
    eval_only_entities: int = 0
    eval_only_relations: int = 0

    def log(self) -> None:
        for split in SPLITS:
            logger.info(
                "split=%s lines=%d kept=%d duplicates=%d",
                split,
                self.raw_lines.get(split, 0),
                self.kept.get(split, 0),
                self.duplicates.get(split, 0),
            )
        if self.eval_only_entities or self.eval_only_relations:
            logger.warning(
                "vocabulary entries first seen outside train: entities=%d relations=%d",
                self.eval_only_entities,
                self.eval_only_relations,
            )


def _as_triple_array(rows: Sequence[tuple[int, int, int]]) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    arr.setflags(write=False)
    return arr


class KnowledgeGraph:
    """Immutable container for vocabularies, splits and the positive index.

    The positive index covers train + valid + test, injected noise
    included, since the learner must not be able to tell noise apart.
    Safe for unlimited concurrent readers once constructed.
    """

    def __init__(
        self,
        entity_vocab: Vocabulary,
        relation_vocab: Vocabulary,
        train: np.ndarray,
        valid: np.ndarray,
        test: np.ndarray,
        train_labels: np.ndarray | None = None,
        load_report: LoadReport | None = None,
    ):
        self.entity_vocab = entity_vocab
        self.relation_vocab = relation_vocab
        self.train = _as_triple_array(train)
        self.valid = _as_triple_array(valid)
        self.test = _as_triple_array(test)
        if train_labels is None:
            train_labels = np.zeros(len(self.train), dtype=bool)
        self.train_labels = np.asarray(train_labels, dtype=bool)
        if len(self.train_labels) != len(self.train):
            raise DataError("noise label array length does not match train split")
        self.train_labels.setflags(write=False)
        self.load_report = load_report

        self._check_ranges()
        encoded = np.concatenate(
            [self.encode_array(s) for s in (self.train, self.valid, self.test)]
        )
        self.positive_index = frozenset(encoded.tolist())
        self._rel_positions = self._build_relation_index()

    # -- construction helpers -------------------------------------------------

    @property
    def n_entities(self) -> int:
        return len(self.entity_vocab)

    @property
    def n_relations(self) -> int:
        return len(self.relation_vocab)

    def _check_ranges(self) -> None:
        n_ent, n_rel = self.n_entities, self.n_relations
        for name, arr in (("train", self.train), ("valid", self.valid), ("test", self.test)):
            if len(arr) == 0:
                continue
            if arr[:, [0, 2]].max() >= n_ent or arr[:, [0, 2]].min() < 0:
                raise DataError(f"{name} split references an out-of-range entity id")
            if arr[:, 1].max() >= n_rel or arr[:, 1].min() < 0:
                raise DataError(f"{name} split references an out-of-range relation id")

    def _build_relation_index(self) -> dict[int, np.ndarray]:
        index: dict[int, np.ndarray] = {}
        rels = self.train[:, 1]
        for r in range(self.n_relations):
            pos = np.flatnonzero(rels == r)
            pos.setflags(write=False)
            index[r] = pos
        return index

    # -- positive-index access -------------------------------------------------

    def encode(self, head: int, relation: int, tail: int) -> int:
        return (int(head) * self.n_relations + int(relation)) * self.n_entities + int(tail)

    def encode_array(self, triples: np.ndarray) -> np.ndarray:
        if len(triples) == 0:
            return np.zeros(0, dtype=np.int64)
        return (triples[:, 0] * self.n_relations + triples[:, 1]) * self.n_entities + triples[:, 2]

    def is_positive(self, head: int, relation: int, tail: int) -> bool:
        return self.encode(head, relation, tail) in self.positive_index

    # -- per-relation access ---------------------------------------------------

    def relation_positions(self, relation: int) -> np.ndarray:
        """Positions (row indices into ``train``) of a relation's triples."""
        if not 0 <= relation < self.n_relations:
            raise DataError(f"relation id {relation} out of range")
        return self._rel_positions[relation]

    def triples_of_relation(self, relation: int) -> list[LabeledTriple]:
        """Train triples of ``relation`` in stored order, with noise flags."""
        pos = self.relation_positions(relation)
        rows = self.train[pos]
        flags = self.train_labels[pos]
        return [
            LabeledTriple(Triple(int(h), int(r), int(t)), bool(f))
            for (h, r, t), f in zip(rows, flags)
        ]

    def with_train(self, train: np.ndarray, train_labels: np.ndarray) -> "KnowledgeGraph":
        """New graph sharing vocabularies and eval splits, replacing train."""
        return KnowledgeGraph(
            self.entity_vocab,
            self.relation_vocab,
            train,
            self.valid,
            self.test,
            train_labels=train_labels,
            load_report=self.load_report,
        )


def triples_of_relation(graph: KnowledgeGraph, relation: int) -> list[LabeledTriple]:
    return graph.triples_of_relation(relation)


def _read_split(path, split: str, entity_vocab: Vocabulary, relation_vocab: Vocabulary,
                report: LoadReport, train_entities: set[str], train_relations: set[str]):
    rows: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    raw = dups = 0
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if line.endswith("\n"):
                line = line[:-1]
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DataError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                )
            raw += 1
            head_name, rel_name, tail_name = fields
            if split != "train":
                if head_name not in train_entities:
                    report.eval_only_entities += head_name not in entity_vocab
                if tail_name not in train_entities:
                    report.eval_only_entities += tail_name not in entity_vocab
                if rel_name not in train_relations:
                    report.eval_only_relations += rel_name not in relation_vocab
            triple = (entity_vocab.add(head_name), relation_vocab.add(rel_name),
                      entity_vocab.add(tail_name))
            if triple in seen:
                dups += 1
                continue
            seen.add(triple)
            rows.append(triple)
    report.raw_lines[split] = raw
    report.kept[split] = len(rows)
    report.duplicates[split] = dups
    return rows


def load_graph(train_path, valid_path, test_path) -> KnowledgeGraph:
    """Load the three split files into a ``KnowledgeGraph``.

    Duplicate lines within a split are dropped (counted in the load
    report); cross-split duplicates are kept for the filtered evaluation
    protocol to neutralize. Entities or relations first appearing in
    valid/test are accepted and flagged in the report.
    """
    entity_vocab = Vocabulary()
    relation_vocab = Vocabulary()
    report = LoadReport()

    train_rows = _read_split(train_path, "train", entity_vocab, relation_vocab,
                             report, set(), set())
    train_entities = set(entity_vocab.names)
    train_relations = set(relation_vocab.names)
    valid_rows = _read_split(valid_path, "valid", entity_vocab, relation_vocab,
                             report, train_entities, train_relations)
    test_rows = _read_split(test_path, "test", entity_vocab, relation_vocab,
                            report, train_entities, train_relations)

    report.log()
    return KnowledgeGraph(
        entity_vocab,
        relation_vocab,
        _as_triple_array(train_rows),
        _as_triple_array(valid_rows),
        _as_triple_array(test_rows),
        load_report=report,
    )


def write_triples(path, graph: KnowledgeGraph, triples: np.ndarray) -> None:
    """Write triples as a name-based TSV file (one fact per line)."""
    ent, rel = graph.entity_vocab, graph.relation_vocab
    with open(path, "w", encoding="utf-8") as handle:
        for h, r, t in triples:
            handle.write(f"{ent.name_of(h)}\t{rel.name_of(r)}\t{ent.name_of(t)}\n")
