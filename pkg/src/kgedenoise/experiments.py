"""End-to-end experiment presets.

A preset bundles a dataset recipe with tuned hyperparameters and runs
the full comparison a results row needs: plain training on the noisy
split, the score-filter baseline, and the selection-agent variant, each
evaluated on noise detection, filtered link prediction and triple
classification. All randomness derives from the single master seed, so
rerunning a preset reproduces its report byte for byte.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

from .config import TrainConfig
from .errors import DataError, UsageError
from .evaluation import link_prediction, noise_detection_f1, triple_classification
from .graph import KnowledgeGraph, load_graph
from .models import score_batch
from .noise import inject_noise, make_classification_negatives
from .seeding import seed_for
from .synth import generate_shift_graph
from .trainer import joint_train, model_kind, pretrain_kge, xscore_baseline

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticPreset:
    name: str
    grid_x: int = 20
    grid_y: int = 10
    n_relations: int = 20
    train_per_relation: int = 130
    valid_per_relation: int = 10
    test_per_relation: int = 10
    noise_rate: float = 0.1
    mode: str = "strl"
    config: TrainConfig = TrainConfig()


def _synthetic_config(**overrides) -> TrainConfig:
    base = dict(
        model="transe", dim=32, norm="l1", margin=6.0,
        batch_size=32, learning_rate=0.002, joint_learning_rate=0.0002,
        pretrain_epochs=100, episodes=15, agent_warmup_episodes=5,
        agent_learning_rate=0.001, agent_mimic_steps=3000, agent_mimic_quantile=0.1,
        agent_mimic_sharpness=8.0, alpha=1.0, lambda1=0.001, lambda2=0.01,
        relation_cap=5000, clusters_k=5, joint_kge_epochs=1, delta=0.1,
    )
    base.update(overrides)
    return TrainConfig(**base)


PRESETS: dict[str, SyntheticPreset] = {
    "synthetic-n1": SyntheticPreset(name="synthetic-n1", config=_synthetic_config()),
    "synthetic-n1-mtrl": SyntheticPreset(name="synthetic-n1-mtrl", mode="mtrl",
                                         config=_synthetic_config()),
    "synthetic-tiny": SyntheticPreset(
        name="synthetic-tiny", grid_x=8, grid_y=5, n_relations=4,
        train_per_relation=12, valid_per_relation=3, test_per_relation=3,
        config=_synthetic_config(dim=8, pretrain_epochs=5, episodes=2,
                                 agent_warmup_episodes=2, batch_size=32),
    ),
}

# FB15k-237-style recipe for the full-scale spot check; needs on-disk data.
FULLSCALE_CONFIG = TrainConfig(
    model="transe", dim=100, norm="l1", margin=1.0, batch_size=1024,
    learning_rate=0.001, joint_learning_rate=0.0005, pretrain_epochs=100,
    episodes=15, agent_warmup_episodes=5, agent_learning_rate=0.01,
    alpha=0.05, lambda1=0.001, lambda2=0.01, clusters_k=120,
)


def evaluate_store(kind, store, graph: KnowledgeGraph, labels, mask, seed: int) -> dict:
    """Shared evaluation block: noise F1, filtered ranking, classification."""
    lp = link_prediction(kind, store, graph)
    vt, vl, tt, tl = make_classification_negatives(graph, seed_for(seed, "class-negatives"))
    cls = triple_classification(kind, store, vt, vl, tt, tl)
    out = {
        "mrr": lp.mrr,
        "hits": {str(n): v for n, v in sorted(lp.hits.items())},
        "classification_accuracy": cls.accuracy,
    }
    if labels is not None and labels.any():
        out["noise_f1_score_sweep"] = noise_detection_f1(
            score_batch(kind, store, graph.train), labels)
        if mask is not None:
            out["noise_f1"] = noise_detection_f1(mask, labels)
            out["kept"] = int(mask.sum())
    return out


def run_synthetic_experiment(preset_name: str, seed: int) -> dict:
    """Run a synthetic preset end to end and return the report dict."""
    if preset_name not in PRESETS:
        raise UsageError(f"unknown preset {preset_name!r}; choices: {sorted(PRESETS)}")
    preset = PRESETS[preset_name]
    config = preset.config.replace(seed=seed, mode=preset.mode)
    kind = model_kind(config)

    clean = generate_shift_graph(
        grid_x=preset.grid_x, grid_y=preset.grid_y, n_relations=preset.n_relations,
        train_per_relation=preset.train_per_relation,
        valid_per_relation=preset.valid_per_relation,
        test_per_relation=preset.test_per_relation,
        seed=seed_for(seed, "synthgraph"),
    )
    graph = inject_noise(clean, preset.noise_rate, seed_for(seed, "noise"))
    labels = graph.train_labels

    report: dict = {
        "preset": preset.name,
        "seed": seed,
        "graph": {
            "entities": graph.n_entities,
            "relations": graph.n_relations,
            "train": len(graph.train),
            "valid": len(graph.valid),
            "test": len(graph.test),
            "injected": int(labels.sum()),
        },
        "models": {},
    }

    logger.info("preset %s seed %d: plain baseline", preset.name, seed)
    plain_cfg = config.replace(seed=seed_for(seed, "plain"))
    plain = pretrain_kge(graph, kind, plain_cfg)
    report["models"]["plain"] = evaluate_store(kind, plain.store, graph, labels, None, seed)

    logger.info("preset %s seed %d: selection agents (%s)", preset.name, seed, preset.mode)
    joint_cfg = config.replace(seed=seed_for(seed, "joint"))
    joint = joint_train(graph, kind, preset.mode, joint_cfg)
    report["models"][preset.mode] = evaluate_store(kind, joint.store, graph, labels,
                                                   joint.mask, seed)

    logger.info("preset %s seed %d: score-filter baseline", preset.name, seed)
    xscore_cfg = config.replace(seed=seed_for(seed, "xscore"))
    xscore = xscore_baseline(graph, kind, config.delta, xscore_cfg)
    report["models"]["xscore"] = evaluate_store(kind, xscore.store, graph, labels,
                                                xscore.mask, seed)
    report["models"]["xscore"]["pretrain_score_sweep_f1"] = noise_detection_f1(
        xscore.pretrain_scores, labels)

    matched = xscore_baseline(graph, kind, config.delta, xscore_cfg,
                              keep_count=int(joint.mask.sum()))
    report["models"]["xscore_matched"] = {
        "kept": int(matched.mask.sum()),
        "noise_f1": noise_detection_f1(matched.mask, labels),
    }

    agents = report["models"][preset.mode]
    report["comparisons"] = {
        "agent_mrr_minus_plain": agents["mrr"] - report["models"]["plain"]["mrr"],
        "agent_f1_minus_xscore_matched":
            agents["noise_f1"] - report["models"]["xscore_matched"]["noise_f1"],
    }
    return report


def run_file_experiment(data_dir, config: TrainConfig, noise_rate: float, mode: str) -> dict:
    """Noise-inject an on-disk benchmark and run plain + selected variants."""
    paths = [os.path.join(data_dir, name) for name in ("train.txt", "valid.txt", "test.txt")]
    for path in paths:
        if not os.path.exists(path):
            raise DataError(f"missing split file {path}")
    clean = load_graph(*paths)
    graph = inject_noise(clean, noise_rate, seed_for(config.seed, "noise"))
    kind = model_kind(config)

    plain = pretrain_kge(graph, kind, config.replace(seed=seed_for(config.seed, "plain")))
    report = {
        "data_dir": str(data_dir),
        "noise_rate": noise_rate,
        "models": {
            "plain": evaluate_store(kind, plain.store, graph, graph.train_labels,
                                    None, config.seed),
        },
    }
    if mode in ("strl", "mtrl"):
        joint = joint_train(graph, kind, mode,
                            config.replace(seed=seed_for(config.seed, "joint")))
        report["models"][mode] = evaluate_store(kind, joint.store, graph,
                                                graph.train_labels, joint.mask, config.seed)
    return report


def write_report(report: dict, path) -> None:
    """Stable-order JSON so identical runs produce identical bytes."""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2, sort_keys=True)
        handle.write("\n")
