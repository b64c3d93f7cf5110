"""Flat key-value training configuration.

Config files hold one ``key = value`` pair per line; ``#`` starts a
comment. Unknown keys are rejected so typos fail loudly. The effective
configuration (defaults merged with file and CLI overrides) is echoed
into every output directory for reproducibility; environment variables
are never consulted.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import DataError

_PRETRAIN_EPOCH_CAP = 100


@dataclass
class TrainConfig:
    # model
    model: str = "transe"            # transe | distmult | rotate
    dim: int = 100
    norm: str = "l1"                 # TransE norm
    margin: float = 1.0              # TransE margin (gamma)
    eta: float = 5.0                 # RotatE margin
    k_negatives: int = 10            # negatives per positive, DistMult/RotatE
    l2_coeff: float = 1e-5           # DistMult L2 coefficient
    # optimization
    batch_size: int = 1024
    learning_rate: float = 0.001     # base models / pre-training
    joint_learning_rate: float = 0.0005  # extended models (joint loop)
    pretrain_epochs: int = 100       # hard-capped at 100
    # agents
    mode: str = "plain"              # plain | strl | mtrl | xscore
    episodes: int = 15               # M
    agent_warmup_episodes: int = 5
    agent_learning_rate: float = 0.01
    agent_baseline_decay: float = 0.9   # running-mean reward baseline (<0 disables)
    agent_mimic_steps: int = 0       # supervised score-mimic warm start (0 = off)
    agent_mimic_quantile: float = 0.1
    agent_mimic_sharpness: float = 1.0  # post-fit logit scale; >1 hardens selections
    alpha: float = 0.05              # keep-more reward bonus
    lambda1: float = 0.001           # shared-weight penalty
    lambda2: float = 0.01            # relation-weight penalty
    clusters_k: int = 10
    joint_kge_epochs: int = 1        # embedding epochs per relation visit
    relation_cap: int = 5000         # per-relation trajectory cap
    # baselines
    delta: float = 0.1               # score-filter drop fraction
    # reproducibility
    seed: int = 0

    def __post_init__(self):
        if self.model not in ("transe", "distmult", "rotate"):
            raise DataError(f"unknown model {self.model!r}")
        if self.mode not in ("plain", "strl", "mtrl", "xscore"):
            raise DataError(f"unknown mode {self.mode!r}")
        if not 0.0 <= self.delta <= 1.0:
            raise DataError("delta must lie in [0, 1]")

    def replace(self, **overrides) -> "TrainConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(overrides)
        return TrainConfig(**values)


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config(path) -> TrainConfig:
    values = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise DataError(f"{path}:{lineno}: expected `key = value`")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in _FIELD_TYPES:
                raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _coerce(key, raw)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return TrainConfig(**values)


def format_config(config: TrainConfig) -> str:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in fields(TrainConfig)]
    return "\n".join(lines) + "\n"


def write_config(path, config: TrainConfig) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(format_config(config))
