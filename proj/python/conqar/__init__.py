"""Rating prediction from review text with density-matrix user and item representations."""

import json
import os

from . import _conqar
from ._conqar import (
    ConfigError,
    DimensionError,
    FormatError,
    IoError,
    NumericError,
    density_matrix,
    matrix_csv,
    mean_absolute_error,
    mutual_trace,
    parse_matrix_csv,
    tokenize,
    top_k_positions,
    unit_states,
)

__all__ = [
    "ConfigError", "DimensionError", "FormatError", "IoError", "NumericError",
    "prepare", "train", "grid_search", "ablate", "evaluate", "visualize",
    "tokenize", "unit_states", "density_matrix", "mutual_trace", "mean_absolute_error",
    "top_k_positions", "matrix_csv", "parse_matrix_csv",
]


def prepare(input, out, format="amazon", seed=42, min_count=1, max_review_words=100, max_reviews=15):
    """Parse, split and index a review dump into ``out``. Returns the summary counts."""
    return json.loads(_conqar.prepare(os.fspath(input), os.fspath(out), format, seed, min_count,
                                      max_review_words, max_reviews))


def train(config, data_dir, out):
    """Train one configuration; writes metrics.jsonl, summary.json and checkpoint.bin into ``out``."""
    return json.loads(_conqar.train(json.dumps(config), os.fspath(data_dir), os.fspath(out)))


def grid_search(grid, data_dir, threads=1):
    return json.loads(_conqar.grid_search(json.dumps(grid), os.fspath(data_dir), threads))


def ablate(config, data_dir):
    return json.loads(_conqar.ablate(json.dumps(config), os.fspath(data_dir)))


def evaluate(checkpoint, split="test", data_dir=None):
    """MAE of a saved model on a split, each target review excluded from its documents."""
    return _conqar.evaluate(os.fspath(checkpoint), split, os.fspath(data_dir) if data_dir else "")


def visualize(checkpoint, user, item, out, k=20, data_dir=None):
    """Density heatmaps and top-k highlights for one pair. Returns the written paths."""
    return _conqar.visualize(os.fspath(checkpoint), user, item, os.fspath(out), k,
                             os.fspath(data_dir) if data_dir else "")
