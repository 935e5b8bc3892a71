"""Odd-k-out training, calibration metrics and theory checks (C++ core)."""

import json as _json

from ._core import (  # noqa: F401
    InvalidArgument,
    ValidationError,
    config_hash,
    ece,
    focal,
    limit_deviation,
    log_softmax,
    log_sum_exp,
    minimize_q_epsilon,
    oko_hard,
    oko_soft,
    q_epsilon,
    q_epsilon_by_enumeration,
    rc,
    report,
    set_logit_sum,
    smoothed_ce,
    softmax,
    temperature_scale,
    train,
    vanilla_ce,
)
from . import _core


def evaluate(probs, labels, bins=10):
    """Calibration report for predicted distributions, as a dict."""
    return _json.loads(_core.evaluate_json(probs, labels, bins))


def verify(eps=(0.1, 0.01, 0.001), rc_samples=1_000_000, seed=0):
    """Run the theory-check suite; returns {"checks": [...], "all_pass": bool}."""
    return _json.loads(_core.verify_json(list(eps), rc_samples, seed))
