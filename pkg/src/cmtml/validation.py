"""Input validation helpers.

Small checks shared by the data loaders, the estimator and the network
modules. They normalize inputs to numpy arrays and fail loudly with the
package's exception types instead of letting shape errors surface deep
inside torch ops.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, InputError

ATTENTION_MODES = ("NA", "SA", "TA")
EVAL_MODES = ("GE", "LE", "GL")
FUSION_VARIANTS = ("CM_LSTM", "EM", "CAT", "CTRL")


def check_feature_array(x, *, name: str = "features", n_clips: int | None = None) -> np.ndarray:
    """Validate a (d, l) clip-feature array: 2-D, non-empty, all entries finite."""
    arr = np.asarray(x)
    if arr.size == 0:
        raise InputError(f"{name}: empty feature array")
    if arr.ndim != 2:
        raise InputError(f"{name}: expected a 2-D (features x clips) array, got ndim={arr.ndim}")
    if not np.isfinite(arr).all():
        bad = int(np.size(arr) - np.isfinite(arr).sum())
        raise InputError(f"{name}: {bad} non-finite entries")
    if n_clips is not None and arr.shape[1] != n_clips:
        raise InputError(f"{name}: expected {n_clips} clips, got {arr.shape[1]}")
    return arr


def check_positive(value: float, name: str) -> float:
    if not value > 0:
        raise ConfigurationError(f"{name} must be positive, got {value!r}")
    return float(value)


def check_unit_interval(value: float, name: str, *, closed_right: bool = False) -> float:
    hi_ok = value <= 1 if closed_right else value < 1
    if not (0 <= value and hi_ok):
        bound = "[0, 1]" if closed_right else "[0, 1)"
        raise ConfigurationError(f"{name} must lie in {bound}, got {value!r}")
    return float(value)


def check_choice(value: str, choices: tuple[str, ...], name: str) -> str:
    if value not in choices:
        raise ConfigurationError(f"{name} must be one of {choices}, got {value!r}")
    return value


def check_tokens(tokens) -> tuple[str, ...]:
    toks = tuple(tokens)
    if not toks:
        raise InputError("query tokenizes to zero tokens")
    return toks
