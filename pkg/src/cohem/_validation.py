"""Exceptions and input checks shared across the package."""

import numpy as np


class InputError(ValueError):
    """Malformed or inconsistent user input."""

    category = "input"


class ContractError(ValueError):
    """An operation was called outside its precondition (e.g. infeasible action)."""

    category = "contract"


class ScenarioParseError(ValueError):
    """A scenario or results file could not be parsed."""

    category = "parse"


def check_vector(x, length=None, name="vector", nonnegative=False):
    """Return ``x`` as a 1-d float array, checking length and finiteness."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise InputError(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    if nonnegative and np.any(arr < 0):
        raise InputError(f"{name} must be nonnegative")
    return arr


def check_same_length(**vectors):
    lengths = {k: len(v) for k, v in vectors.items()}
    if len(set(lengths.values())) > 1:
        raise InputError(f"length mismatch: {lengths}")
    return next(iter(lengths.values()))
