"""Floating Gossip: mean-field analysis and simulation of opportunistic gossip learning."""

import json

from . import _core
from ._core import FgError

__all__ = [
    "FgError",
    "analytic",
    "calibrate",
    "capacity",
    "exponential_contact_model",
    "resolve_config",
    "simulate",
    "stability_map",
]


def _dump(doc):
    return json.dumps({} if doc is None else doc)


def _cm(contact_model):
    return None if contact_model is None else json.dumps(contact_model)


def resolve_config(config=None):
    """Validated config with every default filled in."""
    return json.loads(_core.resolve_config(_dump(config)))


def exponential_contact_model(config=None):
    return json.loads(_core.exponential_contact_model(_dump(config)))


def calibrate(config=None, duration=6000.0, seed=1):
    """Mobility-only run measuring the contact model."""
    return json.loads(_core.calibrate(_dump(config), float(duration), int(seed)))


def analytic(config=None, contact_model=None, staleness_samples=100000, seed=1):
    """Fixed point, stability, observation curve and staleness bound.

    Without a contact model the exponential fallback is used.
    """
    return json.loads(
        _core.analytic(_dump(config), _cm(contact_model), int(staleness_samples), int(seed))
    )


def simulate(config=None, runs=1, seed=1, slots=10000, threads=0):
    """Per-run reports plus the aggregate (None for a single run)."""
    return json.loads(_core.simulate(_dump(config), int(runs), int(seed), int(slots), int(threads)))


def capacity(config=None, contact_model=None, m_max=40):
    return json.loads(_core.capacity(_dump(config), _cm(contact_model), int(m_max)))


def stability_map(m_values, lambda_values, config=None, contact_model=None):
    return json.loads(
        _core.stability_map(
            _dump(config),
            _cm(contact_model),
            [int(m) for m in m_values],
            [float(x) for x in lambda_values],
        )
    )
