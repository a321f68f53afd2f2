import math

import numpy as np

from hire.utils.errors import ConfigError, ValidationError

TRAIN_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)


def require(condition: bool, message: str, error=ConfigError):
    if not condition:
        raise error(message)


def validate_range(name, value, low=None, high=None, low_open=False, high_open=False, error=ConfigError):
    if value is None or isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value):
        raise error(f"{name} must be a number, got {value!r}")
    if low is not None and (value < low or (low_open and value == low)):
        bracket = "(" if low_open else "["
        raise error(f"{name}={value} outside {bracket}{low}, {high if high is not None else 'inf'}")
    if high is not None and (value > high or (high_open and value == high)):
        bracket = ")" if high_open else "]"
        raise error(f"{name}={value} outside [{low if low is not None else '-inf'}, {high}{bracket}")
    return value


def validate_choice(name, value, choices, error=ConfigError):
    if value not in choices:
        raise error(f"{name} must be one of {list(choices)}, got {value!r}")
    return value


def validate_positive_int(name, value, minimum=1, error=ConfigError):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise error(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def validate_train_fraction(value):
    validate_range("train_fraction", value, 0.0, 1.0, low_open=True)
    if not any(abs(value - allowed) < 1e-12 for allowed in TRAIN_FRACTIONS):
        raise ConfigError(f"train_fraction must be one of {list(TRAIN_FRACTIONS)}, got {value}")
    return float(value)


def validate_known_keys(name, doc, allowed, error=ConfigError):
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise error(f"unknown keys in {name}: {unknown}")
    return doc


def validate_index_array(name, values, error=ValidationError) -> np.ndarray:
    """Integer array from JSON values; floats are accepted only when integral."""
    try:
        arr = np.asarray(values)
    except ValueError as e:
        raise error(f"{name} must be a rectangular array of integers") from e
    if arr.size == 0:
        return arr.astype(np.int64)
    if arr.dtype.kind in "iu":
        return arr.astype(np.int64)
    if arr.dtype.kind != "f" or not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
        raise error(f"{name} must hold integers only")
    return arr.astype(np.int64)


def validate_float_array(name, values, error=ValidationError) -> np.ndarray:
    if not isinstance(values, (list, tuple)):
        raise error(f"{name} must be a list of numbers, got {type(values).__name__}")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
        raise error(f"{name} must hold numbers only")
    return np.asarray(values, dtype=np.float64)
