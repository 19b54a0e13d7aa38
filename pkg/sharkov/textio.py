"""Shortest round-trip decimal text for reals, shared by the map, hypernumber and report formats."""

import math
from typing import List

from sharkov.errors import InvalidArgumentError


def format_real(value: float) -> str:
    value = float(value)
    if math.isfinite(value) and value.is_integer() and abs(value) < 2 ** 53:
        return str(int(value))
    return repr(value)


def parse_real(token: str) -> float:
    try:
        value = float(token.strip())
    except ValueError:
        raise InvalidArgumentError(f"Not a real number: {token!r}")
    if not math.isfinite(value):
        raise InvalidArgumentError(f"Non-finite value not allowed: {token!r}")
    return value


def parse_real_list(text: str) -> List[float]:
    text = text.strip()
    if not text:
        return []
    return [parse_real(token) for token in text.split(",")]
