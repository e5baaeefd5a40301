"""Robust shared-parameter joint models for longitudinal markers and event times."""

import json

from ._rjm import (
    DomainError,
    Service,
    UndefinedMetricError,
    ValidationError,
    auc,
    brier,
    config_keys,
    fit,
    log_density_normal,
    log_density_t,
    r2,
    simulate,
)


def request(service, method, path, payload=None, **query):
    """Calls `service.handle` with a JSON payload and decodes the reply."""
    body = "" if payload is None else json.dumps(payload)
    status, text = service.handle(method, path, body, {k: str(v) for k, v in query.items()})
    return status, json.loads(text)


__all__ = [
    "DomainError",
    "Service",
    "UndefinedMetricError",
    "ValidationError",
    "auc",
    "brier",
    "config_keys",
    "fit",
    "log_density_normal",
    "log_density_t",
    "r2",
    "request",
    "simulate",
]
