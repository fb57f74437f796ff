"""Python front end for the tppbench C++ core."""

import json
import os

from . import _core
from ._core import (
    EventSequence,
    HawkesParams,
    TppError,
    generate_hawkes,
    hawkes_compensator,
    hawkes_intensity,
    hawkes_loglik,
    load_dataset,
    otd,
    write_dataset,
)

__all__ = [
    "EventSequence",
    "HawkesParams",
    "TppError",
    "benchmark",
    "evaluate",
    "generate_hawkes",
    "hawkes_compensator",
    "hawkes_intensity",
    "hawkes_loglik",
    "load_config",
    "load_dataset",
    "otd",
    "train",
    "write_dataset",
]


def load_config(path, experiment_id="", overrides=()):
    """Resolved experiment config as a dict, with key=value overrides applied."""
    return json.loads(_core.resolve_config(os.fspath(path), experiment_id, list(overrides)))


def train(config, overrides=()):
    """Train from a resolved config dict; returns a summary dict."""
    return json.loads(_core.train(json.dumps(config), list(overrides)))


def evaluate(config, checkpoint=None, tasks=("loglik", "next_event", "horizon")):
    if checkpoint is None:
        checkpoint = os.path.join(config["output_dir"], "checkpoint")
    return json.loads(_core.evaluate(json.dumps(config), os.fspath(checkpoint), list(tasks)))


def benchmark(config, models, tasks=("loglik", "next_event", "horizon")):
    return json.loads(_core.benchmark(json.dumps(config), list(models), list(tasks)))
