"""Python bindings for taxoexpan. Configs and reports are plain dicts."""

import json

from . import _core
from ._core import (
    DataError,
    Model,
    NumericalError,
    Taxonomy,
    TaxonomySplit,
    gradcheck,
    hit_at_k,
    infonce_loss,
    load_taxonomy,
    mask_leaves,
    mean_rank,
    rank,
    scaled_mrr,
    synthetic_taxonomy,
)

__all__ = [
    "DataError",
    "Model",
    "NumericalError",
    "Taxonomy",
    "TaxonomySplit",
    "baseline_metrics",
    "evaluate",
    "fit",
    "gradcheck",
    "hit_at_k",
    "infonce_loss",
    "load_taxonomy",
    "make_model",
    "mask_leaves",
    "mean_rank",
    "rank",
    "scaled_mrr",
    "synthetic_taxonomy",
]


def _dump(cfg):
    return json.dumps(cfg) if cfg else ""


def make_model(config=None, feature_dim=64, seed=0):
    return Model(_dump(config), feature_dim, seed)


def fit(split, model_config=None, train_config=None):
    """Trains on split.existing; returns (model, best_epoch, per-epoch log dicts)."""
    result = _core.fit(split, _dump(model_config), _dump(train_config))
    return result.model, result.best_epoch, [json.loads(line) for line in result.log]


def evaluate(split, model):
    return json.loads(_core.evaluate(split, model))


def baseline_metrics(split, which="closest_parent"):
    return json.loads(_core.baseline_metrics(split, which))
