"""
Sharkovskii's order on the positive integers and its lift to hyperintegers.

    3 < 5 < 7 < ... < 2*3 < 2*5 < ... < 2^2*3 < ... < 2^3 < 2^2 < 2 < 1

Every number with an odd part m > 1 comes first, ordered by the power of two
and then by m; the powers of two come last in descending exponent.
"""

import logging
import numbers
from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

from sharkov.errors import InvalidArgumentError
from sharkov.hyper_core import ClassVerdict, HyperNumber, index_set_verdict, require_hypernatural

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SharkovskiiKey:
    ell: int
    m: int

    def __post_init__(self):
        if self.ell < 0 or self.m < 1 or self.m % 2 == 0:
            raise InvalidArgumentError(f"Invalid Sharkovskii key (ell={self.ell}, m={self.m})")

    def reconstruct(self) -> int:
        return (2 ** self.ell) * self.m

    @property
    def is_power_of_two(self) -> bool:
        return self.m == 1

    @property
    def rank(self) -> Tuple[int, int, int]:
        """Sort key: ascending rank means earlier in the order."""
        if self.is_power_of_two:
            return (1, -self.ell, 0)
        return (0, self.ell, self.m)


class OrderVerdict(Enum):
    BEFORE = "before"
    EQUAL = "equal"
    AFTER = "after"

    def flipped(self) -> "OrderVerdict":
        if self is OrderVerdict.BEFORE:
            return OrderVerdict.AFTER
        if self is OrderVerdict.AFTER:
            return OrderVerdict.BEFORE
        return self


class StarVerdict(Enum):
    HOLDS = "holds"
    FAILS = "fails"
    ULTRAFILTER_DEPENDENT = "ultrafilter-dependent"


def _require_positive(n: int, name: str) -> int:
    if isinstance(n, bool):
        raise InvalidArgumentError(f"{name} must be a positive integer, got {n!r}")
    if isinstance(n, numbers.Integral):
        n = int(n)
    elif isinstance(n, float) and n.is_integer():
        n = int(n)
    else:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {n!r}")
    if n < 1:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {n}")
    return n


def decompose(n: int) -> SharkovskiiKey:
    n = _require_positive(n, "n")
    ell = 0
    while n % 2 == 0:
        n //= 2
        ell += 1
    return SharkovskiiKey(ell=ell, m=n)


def precedes(p: int, q: int) -> bool:
    """p comes strictly before q."""
    return decompose(p).rank < decompose(q).rank


def compare(p: int, q: int) -> OrderVerdict:
    key_p = decompose(p).rank
    key_q = decompose(q).rank
    if key_p == key_q:
        return OrderVerdict.EQUAL
    return OrderVerdict.BEFORE if key_p < key_q else OrderVerdict.AFTER


def sharkovskii_sorted(values) -> List[int]:
    return sorted(values, key=lambda n: decompose(n).rank)


def chain(maximum: int) -> List[int]:
    """1..maximum listed in Sharkovskii order."""
    maximum = _require_positive(maximum, "maximum")
    return sharkovskii_sorted(range(1, maximum + 1))


def forced_periods(p: int, bound: int, order_by_sharkovskii: bool = False) -> List[int]:
    """Periods q <= bound whose presence a period-p orbit forces (p comes before q)."""
    p = _require_positive(p, "p")
    bound = _require_positive(bound, "bound")
    forced = [q for q in range(1, bound + 1) if precedes(p, q)]
    if order_by_sharkovskii:
        return sharkovskii_sorted(forced)
    return forced


def star_compare(r: HyperNumber, s: HyperNumber) -> StarVerdict:
    """Lifted order: is {n : R_n comes before S_n} big.

    Strict like the order it lifts, so equal classes fail.
    """
    require_hypernatural(r, "R")
    require_hypernatural(s, "S")
    verdict = index_set_verdict(lambda a, b: precedes(int(a), int(b)), r, s)
    logger.debug(f"star_compare({r}, {s}) -> {verdict.value}")
    if verdict is ClassVerdict.BIG:
        return StarVerdict.HOLDS
    if verdict is ClassVerdict.SMALL:
        return StarVerdict.FAILS
    return StarVerdict.ULTRAFILTER_DEPENDENT
