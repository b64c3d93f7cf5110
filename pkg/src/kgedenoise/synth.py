"""Rule-generated synthetic knowledge graphs for benchmarks and tests.

Entities are cells of a 2-D grid; each relation is a fixed small offset
shift, so a triple (h, r, t) is clean exactly when cell(t) = cell(h) +
offset(r). Shift structure is what translation models represent
natively, the grid's short diameter lets consistency propagate within a
bounded training budget, slot-constrained noise injection breaks the
rule, and every link-prediction query has a unique correct answer.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .graph import KnowledgeGraph, Vocabulary


def generate_shift_graph(grid_x: int = 20, grid_y: int = 10, n_relations: int = 20,
                         train_per_relation: int = 130, valid_per_relation: int = 10,
                         test_per_relation: int = 10, max_dx: int = 3, max_dy: int = 1,
                         seed: int = 0) -> KnowledgeGraph:
    """Build a clean grid-shift graph with per-relation train/valid/test splits."""
    per_relation = train_per_relation + valid_per_relation + test_per_relation
    candidates = [(dx, dy)
                  for dx in range(-max_dx, max_dx + 1)
                  for dy in range(-max_dy, max_dy + 1)
                  if (dx, dy) != (0, 0)]
    if n_relations > len(candidates):
        raise DataError("not enough distinct offsets; raise max_dx/max_dy")
    min_pool = (grid_x - max_dx) * (grid_y - max_dy)
    if per_relation > min_pool:
        raise DataError("per-relation triple count exceeds available grid cells")

    rng = np.random.default_rng(seed)
    offsets = [candidates[i] for i in rng.choice(len(candidates), size=n_relations,
                                                 replace=False)]

    n_entities = grid_x * grid_y
    entity_vocab = Vocabulary(f"e{i:04d}" for i in range(n_entities))
    relation_vocab = Vocabulary(f"r{j:02d}_d{dx:+d}{dy:+d}"
                                for j, (dx, dy) in enumerate(offsets))

    def cell_id(x: int, y: int) -> int:
        return x * grid_y + y

    train_rows, valid_rows, test_rows = [], [], []
    for j, (dx, dy) in enumerate(offsets):
        xs = np.arange(max(0, -dx), grid_x - max(0, dx))
        ys = np.arange(max(0, -dy), grid_y - max(0, dy))
        pool = [(x, y) for x in xs for y in ys]
        picks = rng.choice(len(pool), size=per_relation, replace=False)
        for k, p in enumerate(picks.tolist()):
            x, y = pool[p]
            row = (cell_id(x, y), j, cell_id(x + dx, y + dy))
            if k < train_per_relation:
                train_rows.append(row)
            elif k < train_per_relation + valid_per_relation:
                valid_rows.append(row)
            else:
                test_rows.append(row)

    return KnowledgeGraph(
        entity_vocab,
        relation_vocab,
        np.asarray(train_rows, dtype=np.int64),
        np.asarray(valid_rows, dtype=np.int64),
        np.asarray(test_rows, dtype=np.int64),
    )
