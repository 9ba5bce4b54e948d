"""Force estimation from continuous quantum measurement records."""

from ._core import (
    QpeError,
    Record,
    derive_seed,
    estimate,
    loss,
    periodogram,
    qcrb_bound,
    read_record,
    registered_models,
    simulate,
    smoothing_variance_bound,
    sweep,
    to_physical_force,
    write_record,
)

__all__ = [
    "QpeError",
    "Record",
    "derive_seed",
    "estimate",
    "loss",
    "periodogram",
    "qcrb_bound",
    "read_record",
    "registered_models",
    "simulate",
    "smoothing_variance_bound",
    "sweep",
    "to_physical_force",
    "write_record",
]
