"""Individual-based epidemics with varying infectivity and waning immunity."""

import json
import os

import numpy as np

from epiwane._core import (
    ConvergenceError,
    Error,
    InvalidParameter,
    subcommands,
)
from epiwane import _core

__all__ = [
    "ConvergenceError",
    "Error",
    "InvalidParameter",
    "load_config",
    "fingerprint",
    "solve_flln",
    "simulate",
    "markovian_ode",
    "run",
    "subcommands",
]


def _text(config):
    if isinstance(config, dict):
        return json.dumps(config)
    if isinstance(config, (str, os.PathLike)) and os.path.exists(config):
        with open(config) as f:
            return f.read()
    return str(config)


def load_config(config):
    """Config (path, JSON text or dict) with every default filled in."""
    return json.loads(_core.canonical_config(_text(config)))


def fingerprint(config):
    return _core.fingerprint(_text(config))


def _arrays(d):
    return {k: np.asarray(v) if isinstance(v, list) else v for k, v in d.items()}


def solve_flln(config):
    return _arrays(_core.solve_flln(_text(config)))


def simulate(config, n, seed):
    return _arrays(_core.simulate(_text(config), n, seed))


def markovian_ode(lambda_, mu, i0, dt, horizon):
    return np.asarray(_core.markovian_ode(lambda_, mu, i0, dt, horizon))


def run(command, config, out=None, seed=None, threads=1):
    """Run a CLI subcommand in-process. Returns (exit_code, artifacts, report dict or None)."""
    code, files, report = _core.run(command, _text(config), out, seed, threads)
    return code, files, None if report is None else json.loads(report)
