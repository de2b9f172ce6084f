"""Graph autoencoder fusion toolkit."""

import json

from . import _core
from ._core import (
    DataError,
    StageError,
    adjusted_rand_index,
    dist_dtw,
    dist_euclidean,
    kmeans,
    load_dataset,
    read_matrix,
    silhouette_pairs,
)

__all__ = [
    "DataError",
    "StageError",
    "adjusted_rand_index",
    "config_hash",
    "dist_dtw",
    "dist_euclidean",
    "generate_synthetic",
    "kmeans",
    "load_dataset",
    "read_matrix",
    "report",
    "run_all",
    "silhouette_pairs",
    "tsne",
]


def _dump(config):
    return json.dumps(config or {})


def tsne(embedding, config=None):
    """Exact t-SNE; returns (coords, kl_trace, achieved_perplexity)."""
    return _core.tsne(embedding, _dump(config))


def generate_synthetic(rows, cols, config=None, graph_seed=0):
    return _core.generate_synthetic(rows, cols, _dump(config), graph_seed)


def run_all(config, out):
    """Runs generate, train, evaluate and project; returns the session path."""
    return _core.run_all(_dump(config), str(out))


def config_hash(config):
    return _core.config_hash(_dump(config))


def report(session_dir):
    return json.loads(_core.report(str(session_dir)))
