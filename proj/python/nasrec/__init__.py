"""Weight-sharing architecture search for recommender models."""

import json

from . import _core
from ._core import NasrecError, auc, kendall_tau, logloss, mutations_per_child, pearson_rho, warmup_p

__all__ = [
    "NasrecError",
    "auc",
    "cardinality",
    "cost",
    "eval_subnet",
    "evolve",
    "kendall_tau",
    "logloss",
    "mutations_per_child",
    "pearson_rho",
    "preset",
    "sample",
    "synth",
    "train_supernet",
    "validate",
    "warmup_p",
]


def preset(name):
    return json.loads(_core.preset_json(name))


def cardinality(config):
    counts = json.loads(_core.cardinality_json(json.dumps(config)))
    return {k: int(v) for k, v in counts.items()}


def sample(config, strategy="soac", n=1, seed=0):
    return [json.loads(g) for g in _core.sample_json(json.dumps(config), strategy, n, seed)]


def validate(genotype, config):
    return _core.violations(json.dumps(genotype), json.dumps(config))


def cost(genotype, config, batch=1, embedding_cap=0):
    return json.loads(_core.cost_json(json.dumps(genotype), json.dumps(config), batch, embedding_cap))


def synth(path, rows=100000, num_dense=4, num_sparse=8, vocab=100, structure="pairwise-interaction", seed=0):
    return json.loads(_core.synth_json(str(path), rows, num_dense, num_sparse, vocab, structure, seed))


def train_supernet(dataset, out_dir, run_config=None):
    return json.loads(_core.train_supernet_json(str(dataset), json.dumps(run_config or {}), str(out_dir)))


def eval_subnet(supernet_dir, dataset, genotype, finetune_steps=0, run_config=None):
    return json.loads(
        _core.eval_subnet_json(
            str(supernet_dir), str(dataset), json.dumps(genotype), finetune_steps, json.dumps(run_config or {})
        )
    )


def evolve(config, fitness, evolution=None):
    """Regularized evolution; `fitness` maps a genotype dict to a loss."""
    result = _core.evolve_json(json.dumps(config), json.dumps(evolution or {}), lambda g: fitness(json.loads(g)))
    return json.loads(result)
