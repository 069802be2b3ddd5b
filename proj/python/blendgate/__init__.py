"""Python interface to the blendgate core: blended model selection, mixture
distributions, log-log fits, the cohort simulator and the A/B report."""

import json
import math

from . import _blendgate
from ._blendgate import AnalyticsError, BlendgateError, ConfigError, ValidationError

__all__ = [
    "AnalyticsError",
    "BlendgateError",
    "ConfigError",
    "ValidationError",
    "analyze",
    "blended_turns",
    "expected_cost",
    "fit_loglog",
    "format_report_row",
    "mixture_distribution",
    "recovery_check",
    "select_models",
    "selection_probabilities",
    "simulate",
]


def _dump(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def selection_probabilities(policy):
    """Per-model selection probabilities, in policy order."""
    return _blendgate.selection_probabilities(_dump(policy))


def select_models(policy, seed, n):
    """Model ids of n seeded draws from the policy."""
    return _blendgate.select_models(_dump(policy), seed, n)


def blended_turns(policy, history, user_text, seed, sessions):
    """One blended reply to user_text per fresh session; (response, model_id) pairs.

    history is a list of {"role": "user"|"bot", "text": ...} dicts."""
    return _blendgate.blended_turns(_dump(policy), _dump(history), user_text, seed, sessions)


def mixture_distribution(policy, history):
    """Exact response distribution of the blended policy after history plus a user turn.

    history must end with a user turn; every model needs a discrete_lm mock."""
    return json.loads(_blendgate.mixture_distribution(_dump(policy), _dump(history)))


def expected_cost(policy):
    return _blendgate.expected_cost(_dump(policy))


def fit_loglog(points):
    """OLS of log y on log x over (x, y) pairs."""
    return json.loads(_blendgate.fit_loglog([(float(x), float(y)) for x, y in points]))


def simulate(config):
    """Synthetic event log as JSONL text."""
    return _blendgate.simulate(_dump(config))


def analyze(log_text, config):
    """Comparison report for an event log (JSONL text) under an experiment config."""
    return json.loads(_blendgate.analyze(log_text, _dump(config)))


def recovery_check(config, tolerance=math.inf):
    return json.loads(_blendgate.recovery_check(_dump(config), tolerance))


def format_report_row(name, delta_zeta, delta_beta, delta_gamma, delta_alpha, flop_ratio):
    return _blendgate.format_report_row(name, delta_zeta, delta_beta, delta_gamma, delta_alpha, flop_ratio)
