"""Validation utilities shared by the numerical models and the cache system."""

import math
from datetime import datetime
from typing import Any

from acbounds.exceptions import ValidationError


def validate_string(value: str, name: str) -> None:
    """Validate string is non-empty."""
    if not isinstance(value, str) or not value.strip():
        raise ValidationError(f"{name} must be a non-empty string")


def validate_int(value: int, name: str, min_value: int = 0) -> None:
    """Validate integer is within range."""
    if isinstance(value, bool) or not isinstance(value, int) or value < min_value:
        raise ValidationError(f"{name} must be an integer >= {min_value}")


def validate_positive(value: float, name: str, allow_zero: bool = False) -> None:
    """Validate a finite real number is positive (or nonnegative)."""
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a real number, got {value!r}")
    if not math.isfinite(number):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    if number < 0 or (number == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValidationError(f"{name} must be {bound}, got {value!r}")


def validate_datetime(value: Any, name: str) -> None:
    """Validate datetime object."""
    if not isinstance(value, datetime):
        raise ValidationError(f"{name} must be a datetime object")
