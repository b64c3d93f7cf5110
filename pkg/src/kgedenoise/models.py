"""Embedding models: scores, losses, hand-derived gradients, sparse Adam.

Three score functions are supported:

* translation (``TransE``):     f(h,r,t) = -||h + r - t||  (L1 or L2)
* bilinear diagonal (``DistMult``): f(h,r,t) = sum_i h_i r_i t_i
* complex rotation (``RotatE``): f(h,r,t) = -||h o r - t||_L1 over complex
  coordinates, with relations stored as phases so |r_i| = 1 holds by
  construction.

Losses: margin hinge with one uniform negative per positive (TransE),
softplus over +-1 labeled triples plus an L2 term on touched rows
(DistMult), and a sigmoid margin loss with k uniform negatives per
positive (RotatE). Gradients are returned sparsely, only for rows that a
batch actually touches; the subgradient at hinge and L1 kinks is 0.

Checkpoint layout (all little-endian, documented here and in README):

    magic   4 bytes  b"KGDN"
    version u32      1
    kind    u8       0=translation, 1=bilinear, 2=rotation
    norm    u8       1 or 2 for TransE's norm, 0 otherwise
    param_a f64      margin (TransE/RotatE) or l2 coefficient (DistMult)
    param_k u32      negatives per positive (0 for TransE)
    n_ent   u64 | n_rel u64 | dim u64 | step_ent u64 | step_rel u64
    entities, relations, m_ent, v_ent, m_rel, v_rel  raw <f8 matrices
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import expit

from .errors import DataError, NumericError
from .graph import KnowledgeGraph, Triple


@dataclass(frozen=True)
class TransE:
    norm: str = "l1"  # "l1" or "l2"
    margin: float = 1.0

    def __post_init__(self):
        if self.norm not in ("l1", "l2"):
            raise DataError(f"unsupported norm {self.norm!r}")


@dataclass(frozen=True)
class DistMult:
    l2_coeff: float = 1e-5
    negatives: int = 10


@dataclass(frozen=True)
class RotatE:
    margin: float = 5.0
    negatives: int = 10


ModelKind = Union[TransE, DistMult, RotatE]

_KIND_CODES = {TransE: 0, DistMult: 1, RotatE: 2}


def kind_name(kind: ModelKind) -> str:
    return {TransE: "transe", DistMult: "distmult", RotatE: "rotate"}[type(kind)]


def entity_width(kind: ModelKind, dim: int) -> int:
    return 2 * dim if isinstance(kind, RotatE) else dim


@dataclass
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise DataError("Adam betas must lie strictly between 0 and 1")
        if self.epsilon <= 0.0:
            raise DataError("Adam epsilon must be positive")


class EmbeddingStore:
    """Entity/relation parameter matrices plus per-matrix Adam state.

    Mutation is single-writer; scoring against a store that is not being
    updated is safe for any number of concurrent readers.
    """

    def __init__(self, kind: ModelKind, dim: int, entities: np.ndarray, relations: np.ndarray):
        self.kind = kind
        self.dim = dim
        self.entities = entities
        self.relations = relations
        self.m_ent = np.zeros_like(entities)
        self.v_ent = np.zeros_like(entities)
        self.m_rel = np.zeros_like(relations)
        self.v_rel = np.zeros_like(relations)
        self.step_ent = 0
        self.step_rel = 0

    @property
    def n_entities(self) -> int:
        return self.entities.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relations.shape[0]

    def copy(self) -> "EmbeddingStore":
        dup = EmbeddingStore(self.kind, self.dim, self.entities.copy(), self.relations.copy())
        dup.m_ent = self.m_ent.copy()
        dup.v_ent = self.v_ent.copy()
        dup.m_rel = self.m_rel.copy()
        dup.v_rel = self.v_rel.copy()
        dup.step_ent = self.step_ent
        dup.step_rel = self.step_rel
        return dup

    def matrices(self):
        return (("entities", self.entities, self.m_ent, self.v_ent),
                ("relations", self.relations, self.m_rel, self.v_rel))


def init_embeddings(n_entities: int, n_relations: int, dim: int, kind: ModelKind,
                    seed: int) -> EmbeddingStore:
    """Uniform init in [-6/sqrt(d), 6/sqrt(d)]; rotation phases in [0, 2pi).

    Entities are drawn before relations, so a fixed seed reproduces the
    store bit for bit.
    """
    if dim < 1:
        raise DataError("embedding dimension must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)
    entities = rng.uniform(-bound, bound, size=(n_entities, entity_width(kind, dim)))
    if isinstance(kind, RotatE):
        relations = rng.uniform(0.0, 2.0 * np.pi, size=(n_relations, dim))
    else:
        relations = rng.uniform(-bound, bound, size=(n_relations, dim))
    return EmbeddingStore(kind, dim, entities, relations)


# -- scoring -------------------------------------------------------------------


def _rotate_parts(store: EmbeddingStore, h: np.ndarray, r: np.ndarray, t: np.ndarray):
    """Per-dimension residual (a, b) of h o r - t and its modulus."""
    d = store.dim
    ent = store.entities
    h_re, h_im = ent[h, :d], ent[h, d:]
    t_re, t_im = ent[t, :d], ent[t, d:]
    theta = store.relations[r]
    cos, sin = np.cos(theta), np.sin(theta)
    a = h_re * cos - h_im * sin - t_re
    b = h_re * sin + h_im * cos - t_im
    modulus = np.sqrt(a * a + b * b)
    return a, b, modulus, cos, sin, t_re, t_im


def score_batch(kind: ModelKind, store: EmbeddingStore, triples: np.ndarray) -> np.ndarray:
    """Scores for an (n, 3) array of id triples."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    if isinstance(kind, TransE):
        delta = store.entities[h] + store.relations[r] - store.entities[t]
        if kind.norm == "l1":
            return -np.abs(delta).sum(axis=1)
        return -np.sqrt((delta * delta).sum(axis=1))
    if isinstance(kind, DistMult):
        return (store.entities[h] * store.relations[r] * store.entities[t]).sum(axis=1)
    _, _, modulus, *_ = _rotate_parts(store, h, r, t)
    return -modulus.sum(axis=1)


def score(kind: ModelKind, store: EmbeddingStore, head: int, relation: int, tail: int) -> float:
    return float(score_batch(kind, store, np.array([[head, relation, tail]]))[0])


def score_all_tails(kind: ModelKind, store: EmbeddingStore, head: int, relation: int) -> np.ndarray:
    """Score (head, relation, t) for every entity t."""
    ent = store.entities
    if isinstance(kind, TransE):
        base = ent[head] + store.relations[relation]
        delta = base[None, :] - ent
        if kind.norm == "l1":
            return -np.abs(delta).sum(axis=1)
        return -np.sqrt((delta * delta).sum(axis=1))
    if isinstance(kind, DistMult):
        return ent @ (ent[head] * store.relations[relation])
    d = store.dim
    theta = store.relations[relation]
    cos, sin = np.cos(theta), np.sin(theta)
    h_re, h_im = ent[head, :d], ent[head, d:]
    rot_re = h_re * cos - h_im * sin
    rot_im = h_re * sin + h_im * cos
    a = rot_re[None, :] - ent[:, :d]
    b = rot_im[None, :] - ent[:, d:]
    return -np.sqrt(a * a + b * b).sum(axis=1)


def score_all_heads(kind: ModelKind, store: EmbeddingStore, relation: int, tail: int) -> np.ndarray:
    """Score (h, relation, tail) for every entity h."""
    ent = store.entities
    if isinstance(kind, TransE):
        base = store.relations[relation] - ent[tail]
        delta = ent + base[None, :]
        if kind.norm == "l1":
            return -np.abs(delta).sum(axis=1)
        return -np.sqrt((delta * delta).sum(axis=1))
    if isinstance(kind, DistMult):
        return ent @ (store.relations[relation] * ent[tail])
    d = store.dim
    theta = store.relations[relation]
    cos, sin = np.cos(theta), np.sin(theta)
    rot_re = ent[:, :d] * cos[None, :] - ent[:, d:] * sin[None, :]
    rot_im = ent[:, :d] * sin[None, :] + ent[:, d:] * cos[None, :]
    a = rot_re - ent[tail, :d][None, :]
    b = rot_im - ent[tail, d:][None, :]
    return -np.sqrt(a * a + b * b).sum(axis=1)


def relation_features(kind: ModelKind, store: EmbeddingStore, relations: np.ndarray) -> np.ndarray:
    """Relation rows lifted to the entity row width.

    Rotation phases are mapped to (cos, sin) pairs so that agent states
    and relation clustering see comparable real-valued vectors.
    """
    rows = store.relations[np.asarray(relations, dtype=np.int64)]
    if isinstance(kind, RotatE):
        return np.concatenate([np.cos(rows), np.sin(rows)], axis=1)
    return rows


# -- negative sampling -----------------------------------------------------------

_MAX_RESAMPLES = 10


def sample_negative(graph: KnowledgeGraph, triple, rng: np.random.Generator) -> Triple:
    """Corrupt head or tail (fair coin) with a uniform entity.

    Redraws up to 10 times while the corruption is a known positive, then
    returns the last draw regardless.
    """
    head, relation, tail = int(triple[0]), int(triple[1]), int(triple[2])
    replace_head = rng.random() < 0.5
    candidate = int(rng.integers(graph.n_entities))
    for _ in range(_MAX_RESAMPLES):
        h = candidate if replace_head else head
        t = tail if replace_head else candidate
        if not graph.is_positive(h, relation, t):
            break
        candidate = int(rng.integers(graph.n_entities))
    if replace_head:
        return Triple(candidate, relation, tail)
    return Triple(head, relation, candidate)


def corrupt_batch(graph: KnowledgeGraph, triples: np.ndarray, rng: np.random.Generator,
                  count: int = 1) -> np.ndarray:
    """Vectorized corruption: ``count`` negatives per positive, row-major.

    Applies the same fair-coin / 10-redraw policy as ``sample_negative``
    but draws the first attempt for the whole batch at once.
    """
    rep = np.repeat(np.asarray(triples, dtype=np.int64).reshape(-1, 3), count, axis=0)
    n = len(rep)
    replace_head = rng.random(n) < 0.5
    candidates = rng.integers(0, graph.n_entities, size=n)
    out = rep.copy()
    out[replace_head, 0] = candidates[replace_head]
    out[~replace_head, 2] = candidates[~replace_head]

    index = graph.positive_index
    encoded = graph.encode_array(out)
    for i, code in enumerate(encoded.tolist()):
        if code not in index:
            continue
        h, r, t = out[i]
        for _ in range(_MAX_RESAMPLES):
            candidate = int(rng.integers(graph.n_entities))
            if replace_head[i]:
                h = candidate
            else:
                t = candidate
            if not graph.is_positive(h, r, t):
                break
        out[i, 0], out[i, 2] = h, t
    return out


# -- losses and gradients ----------------------------------------------------------


@dataclass
class SparseGrad:
    """Gradient over the touched rows of one parameter matrix."""

    rows: np.ndarray    # (k,) unique row ids, ascending
    values: np.ndarray  # (k, width)


def _accumulate(rows: np.ndarray, contribs: np.ndarray) -> SparseGrad:
    unique, inverse = np.unique(rows, return_inverse=True)
    acc = np.zeros((len(unique), contribs.shape[1]))
    np.add.at(acc, inverse, contribs)
    return SparseGrad(unique, acc)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _transe_loss_grad(kind: TransE, store, graph, positives, rng):
    negatives = corrupt_batch(graph, positives, rng, 1)
    ent, rel = store.entities, store.relations
    r = positives[:, 1]

    def parts(tr):
        delta = ent[tr[:, 0]] + rel[r] - ent[tr[:, 2]]
        if kind.norm == "l1":
            return -np.abs(delta).sum(axis=1), np.sign(delta)
        norm = np.sqrt((delta * delta).sum(axis=1))
        safe = np.where(norm > 0.0, norm, 1.0)
        grad = np.where(norm[:, None] > 0.0, delta / safe[:, None], 0.0)
        return -norm, grad

    f_pos, g_pos = parts(positives)
    f_neg, g_neg = parts(negatives)
    violation = f_neg - f_pos + kind.margin
    active = violation > 0.0
    loss = float(violation[active].sum())

    act = active[:, None]
    ent_rows = np.concatenate([positives[:, 0], positives[:, 2], negatives[:, 0], negatives[:, 2]])
    ent_contrib = np.concatenate([
        np.where(act, g_pos, 0.0),
        np.where(act, -g_pos, 0.0),
        np.where(act, -g_neg, 0.0),
        np.where(act, g_neg, 0.0),
    ])
    rel_contrib = np.where(act, g_pos - g_neg, 0.0)
    return loss, {
        "entities": _accumulate(ent_rows, ent_contrib),
        "relations": _accumulate(r, rel_contrib),
    }


def _distmult_loss_grad(kind: DistMult, store, graph, positives, rng):
    negatives = corrupt_batch(graph, positives, rng, kind.negatives)
    labeled = np.concatenate([positives, negatives])
    y = np.concatenate([np.ones(len(positives)), -np.ones(len(negatives))])
    ent, rel = store.entities, store.relations
    h, r, t = labeled[:, 0], labeled[:, 1], labeled[:, 2]
    eh, er, et = ent[h], rel[r], ent[t]

    f = (eh * er * et).sum(axis=1)
    loss = float(_softplus(-y * f).sum())
    dldf = (-y * expit(-y * f))[:, None]

    ent_rows = np.concatenate([h, t])
    ent_contrib = np.concatenate([dldf * er * et, dldf * eh * er])
    ent_grad = _accumulate(ent_rows, ent_contrib)
    rel_grad = _accumulate(r, dldf * eh * et)

    # L2 term over the distinct rows this batch touches; each row counted once.
    loss += kind.l2_coeff * float((ent[ent_grad.rows] ** 2).sum() + (rel[rel_grad.rows] ** 2).sum())
    ent_grad.values += 2.0 * kind.l2_coeff * ent[ent_grad.rows]
    rel_grad.values += 2.0 * kind.l2_coeff * rel[rel_grad.rows]
    return loss, {"entities": ent_grad, "relations": rel_grad}


def _rotate_loss_grad(kind: RotatE, store, graph, positives, rng):
    k = kind.negatives
    eta = kind.margin
    negatives = corrupt_batch(graph, positives, rng, k)

    def terms(tr, dldf):
        """Chain df/dscore into entity-row and phase gradients."""
        h, r, t = tr[:, 0], tr[:, 1], tr[:, 2]
        a, b, modulus, cos, sin, t_re, t_im = _rotate_parts(store, h, r, t)
        safe = np.where(modulus > 0.0, modulus, 1.0)
        da = np.where(modulus > 0.0, -a / safe, 0.0) * dldf[:, None]
        db = np.where(modulus > 0.0, -b / safe, 0.0) * dldf[:, None]
        gh = np.concatenate([da * cos + db * sin, -da * sin + db * cos], axis=1)
        gt = np.concatenate([-da, -db], axis=1)
        gr = da * -(b + t_im) + db * (a + t_re)
        return h, t, r, gh, gt, gr

    f_pos = score_batch(kind, store, positives)
    f_neg = score_batch(kind, store, negatives)
    loss = float(_softplus(-(eta + f_pos)).sum() + _softplus(eta + f_neg).sum() / k)
    dldf_pos = -expit(-(eta + f_pos))
    dldf_neg = expit(eta + f_neg) / k

    hp, tp, rp, ghp, gtp, grp = terms(positives, dldf_pos)
    hn, tn, rn, ghn, gtn, grn = terms(negatives, dldf_neg)
    ent_rows = np.concatenate([hp, tp, hn, tn])
    ent_contrib = np.concatenate([ghp, gtp, ghn, gtn])
    rel_rows = np.concatenate([rp, rn])
    rel_contrib = np.concatenate([grp, grn])
    return loss, {
        "entities": _accumulate(ent_rows, ent_contrib),
        "relations": _accumulate(rel_rows, rel_contrib),
    }


def loss_and_grad(kind: ModelKind, store: EmbeddingStore, graph: KnowledgeGraph,
                  positives: np.ndarray, rng: np.random.Generator):
    """Batch loss and sparse gradients over the rows the batch touches.

    Negatives are drawn inside against the graph's positive index. The
    returned loss is the sum over the batch (Adam's update direction is
    invariant to that scale).
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    if len(positives) == 0:
        raise DataError("loss_and_grad requires a nonempty batch of positives")
    if isinstance(kind, TransE):
        return _transe_loss_grad(kind, store, graph, positives, rng)
    if isinstance(kind, DistMult):
        return _distmult_loss_grad(kind, store, graph, positives, rng)
    return _rotate_loss_grad(kind, store, graph, positives, rng)


# -- optimizer -----------------------------------------------------------------


def adam_step(store: EmbeddingStore, grads: dict[str, SparseGrad], config: AdamConfig) -> None:
    """Bias-corrected Adam update on touched rows only.

    Both per-matrix step counters advance once per call; rows absent from
    the gradient keep their parameters and moments bitwise unchanged
    (lazy/sparse Adam semantics).
    """
    store.step_ent += 1
    store.step_rel += 1
    for name, params, m, v in store.matrices():
        grad = grads.get(name)
        step = store.step_ent if name == "entities" else store.step_rel
        if grad is None or len(grad.rows) == 0:
            continue
        if not np.isfinite(grad.values).all():
            bad = grad.rows[~np.isfinite(grad.values).all(axis=1)][0]
            raise NumericError(f"non-finite gradient for {name} row {int(bad)}")
        rows, g = grad.rows, grad.values
        m[rows] = config.beta1 * m[rows] + (1.0 - config.beta1) * g
        v[rows] = config.beta2 * v[rows] + (1.0 - config.beta2) * (g * g)
        m_hat = m[rows] / (1.0 - config.beta1 ** step)
        v_hat = v[rows] / (1.0 - config.beta2 ** step)
        params[rows] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        if not np.isfinite(params[rows]).all():
            bad = rows[~np.isfinite(params[rows]).all(axis=1)][0]
            raise NumericError(f"non-finite parameter after update: {name} row {int(bad)}")


# -- checkpoint IO ----------------------------------------------------------------

_MAGIC = b"KGDN"
_VERSION = 1
_HEADER = struct.Struct("<4sIBBdIQQQQQ")


def _kind_to_fields(kind: ModelKind):
    if isinstance(kind, TransE):
        return _KIND_CODES[TransE], 1 if kind.norm == "l1" else 2, kind.margin, 0
    if isinstance(kind, DistMult):
        return _KIND_CODES[DistMult], 0, kind.l2_coeff, kind.negatives
    return _KIND_CODES[RotatE], 0, kind.margin, kind.negatives


def _kind_from_fields(code: int, norm: int, param_a: float, param_k: int) -> ModelKind:
    if code == 0:
        return TransE(norm="l1" if norm == 1 else "l2", margin=param_a)
    if code == 1:
        return DistMult(l2_coeff=param_a, negatives=param_k)
    if code == 2:
        return RotatE(margin=param_a, negatives=param_k)
    raise DataError(f"unknown model kind code {code} in checkpoint")


def save_store(path, store: EmbeddingStore) -> None:
    code, norm, param_a, param_k = _kind_to_fields(store.kind)
    header = _HEADER.pack(_MAGIC, _VERSION, code, norm, param_a, param_k,
                          store.n_entities, store.n_relations, store.dim,
                          store.step_ent, store.step_rel)
    with open(path, "wb") as handle:
        handle.write(header)
        for arr in (store.entities, store.relations, store.m_ent, store.v_ent,
                    store.m_rel, store.v_rel):
            handle.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_store(path) -> EmbeddingStore:
    with open(path, "rb") as handle:
        raw = handle.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise DataError(f"{path}: truncated checkpoint header")
        magic, version, code, norm, param_a, param_k, n_ent, n_rel, dim, step_e, step_r = \
            _HEADER.unpack(raw)
        if magic != _MAGIC:
            raise DataError(f"{path}: not a model checkpoint (bad magic)")
        if version != _VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        kind = _kind_from_fields(code, norm, param_a, param_k)
        ew = entity_width(kind, dim)

        def read_matrix(rows, cols):
            data = handle.read(rows * cols * 8)
            if len(data) != rows * cols * 8:
                raise DataError(f"{path}: truncated checkpoint body")
            return np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(rows, cols)

        store = EmbeddingStore(kind, dim, read_matrix(n_ent, ew), read_matrix(n_rel, dim))
        store.m_ent = read_matrix(n_ent, ew)
        store.v_ent = read_matrix(n_ent, ew)
        store.m_rel = read_matrix(n_rel, dim)
        store.v_rel = read_matrix(n_rel, dim)
        store.step_ent = step_e
        store.step_rel = step_r
    return store
