"""Kac's 1D particle system and propagation-of-chaos experiments."""

import json

from ._core import (
    ConfigError,
    mean_energy,
    sample_kac_sphere,
    simulate,
    theoretical_rates,
    wasserstein,
)
from . import _core

__all__ = [
    "ConfigError",
    "default_config",
    "mean_energy",
    "run_experiment",
    "sample_kac_sphere",
    "simulate",
    "theoretical_rates",
    "wasserstein",
]


def default_config(experiment):
    return json.loads(_core.default_config_json(experiment))


def run_experiment(experiment, **overrides):
    """Run one experiment; keyword names follow the CLI flags with '-' as '_'.

    Returns the same dictionary that ``kac-chaos --json`` prints.
    """
    config = {k.replace("_", "-"): v for k, v in overrides.items()}
    config["experiment"] = experiment
    return json.loads(_core.run_experiment_json(json.dumps(config)))
