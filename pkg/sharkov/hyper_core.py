"""
Sequence-quotient model of the hyperreals on a decidable fragment.

A HyperNumber is the class of a real sequence written as a finite prefix
followed by an eventually periodic tail. The fragment is closed under
pointwise arithmetic, and "the index set is big" becomes decidable:
cofinite sets are big, finite sets are small, and anything else depends on
the (never constructed) ultrafilter and is reported as undetermined.

Indexing is 1-based, matching sequences (a_n) indexed by the positive integers.
"""

import logging
import math
import operator
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from typing import Callable, List, Sequence, Tuple

from sharkov.errors import InvalidArgumentError, NoShadowError
from sharkov.textio import format_real, parse_real, parse_real_list

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TailRule:
    """Periodic tail of a sequence; always stored with its minimal period."""

    values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values:
            raise InvalidArgumentError("A tail cycle needs at least one value")
        object.__setattr__(self, "values", _minimal_cycle(values))

    @classmethod
    def constant(cls, value: float) -> "TailRule":
        return cls((value,))

    @classmethod
    def cycle(cls, values: Sequence[float]) -> "TailRule":
        return cls(tuple(values))

    @property
    def period(self) -> int:
        return len(self.values)

    @property
    def is_constant(self) -> bool:
        return self.period == 1

    @property
    def kind(self) -> str:
        return "constant" if self.is_constant else "cycle"

    def at(self, offset: int) -> float:
        return self.values[offset % self.period]

    def rotated_right(self) -> "TailRule":
        return TailRule((self.values[-1],) + self.values[:-1])


def _minimal_cycle(values: Tuple[float, ...]) -> Tuple[float, ...]:
    size = len(values)
    for d in range(1, size + 1):
        if size % d == 0 and all(values[i] == values[i % d] for i in range(size)):
            return values[:d]
    return values


@dataclass(frozen=True)
class HyperNumber:
    prefix: Tuple[float, ...] = ()
    tail: TailRule = field(default_factory=lambda: TailRule.constant(0.0))

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(float(v) for v in self.prefix))

    @classmethod
    def constant(cls, value: float) -> "HyperNumber":
        return cls((), TailRule.constant(value))

    @classmethod
    def periodic(cls, cycle: Sequence[float], prefix: Sequence[float] = ()) -> "HyperNumber":
        return cls(tuple(prefix), TailRule.cycle(cycle))

    def entry(self, n: int) -> float:
        """The n-th representative entry, n >= 1."""
        if n < 1:
            raise InvalidArgumentError(f"Sequence indices start at 1, got {n}")
        if n <= len(self.prefix):
            return self.prefix[n - 1]
        return self.tail.at(n - len(self.prefix) - 1)

    def unrolled(self, length: int) -> List[float]:
        return [self.entry(n) for n in range(1, length + 1)]

    def canonical(self) -> "HyperNumber":
        """Same sequence with the prefix absorbed into the tail as far as possible."""
        prefix = list(self.prefix)
        tail = self.tail
        while prefix and prefix[-1] == tail.values[-1]:
            prefix.pop()
            tail = tail.rotated_right()
        return HyperNumber(tuple(prefix), tail)

    @property
    def is_integral(self) -> bool:
        return all(v.is_integer() for v in self.prefix + self.tail.values)

    def __add__(self, other: "HyperNumber") -> "HyperNumber":
        return add(self, other)

    def __sub__(self, other: "HyperNumber") -> "HyperNumber":
        return subtract(self, other)

    def __mul__(self, other: "HyperNumber") -> "HyperNumber":
        return mul(self, other)

    def __neg__(self) -> "HyperNumber":
        return negate(self)

    def __str__(self) -> str:
        return format_hyper(self)


class ClassVerdict(Enum):
    BIG = "big"
    SMALL = "small"
    UNDETERMINED = "undetermined"

    def complement(self) -> "ClassVerdict":
        if self is ClassVerdict.BIG:
            return ClassVerdict.SMALL
        if self is ClassVerdict.SMALL:
            return ClassVerdict.BIG
        return ClassVerdict.UNDETERMINED


class OrderResult(Enum):
    LESS = "less"
    NOT_LESS = "not-less"
    UNDETERMINED = "undetermined"


class Magnitude(Enum):
    INFINITESIMAL = "infinitesimal"
    LIMITED = "limited-non-infinitesimal"
    UNLIMITED = "unlimited"
    NOT_CLASSIFIABLE = "not-classifiable"


class Truth(Enum):
    YES = "yes"
    NO = "no"
    UNDETERMINED = "undetermined"


def aligned(*xs: HyperNumber) -> Tuple[List[List[float]], List[List[float]]]:
    """Unroll operands to a common prefix length and a common (lcm) tail period.

    Returns (prefix rows, cycle rows), one row per operand.
    """
    if not xs:
        raise InvalidArgumentError("aligned() needs at least one operand")
    length = max(len(x.prefix) for x in xs)
    period = reduce(math.lcm, (x.tail.period for x in xs), 1)
    prefixes = [[x.entry(n) for n in range(1, length + 1)] for x in xs]
    cycles = [[x.entry(n) for n in range(length + 1, length + period + 1)] for x in xs]
    return prefixes, cycles


def pointwise(op: Callable[..., float], *xs: HyperNumber) -> HyperNumber:
    prefixes, cycles = aligned(*xs)
    prefix = tuple(op(*column) for column in zip(*prefixes))
    cycle = tuple(op(*column) for column in zip(*cycles))
    return HyperNumber(prefix, TailRule(cycle))


def add(x: HyperNumber, y: HyperNumber) -> HyperNumber:
    return pointwise(operator.add, x, y)


def mul(x: HyperNumber, y: HyperNumber) -> HyperNumber:
    return pointwise(operator.mul, x, y)


def subtract(x: HyperNumber, y: HyperNumber) -> HyperNumber:
    return pointwise(operator.sub, x, y)


def negate(x: HyperNumber) -> HyperNumber:
    return pointwise(operator.neg, x)


def reciprocal(x: HyperNumber) -> HyperNumber:
    """Multiplicative inverse; the tail must be nowhere zero.

    Zero prefix entries map to 0, which leaves the class unchanged.
    """
    if any(v == 0.0 for v in x.tail.values):
        raise InvalidArgumentError(f"{format_hyper(x)} has zeros in its tail and no inverse in the fragment")
    return pointwise(lambda v: 1.0 / v if v != 0.0 else 0.0, x)


def index_set_verdict(predicate: Callable[..., bool], *xs: HyperNumber) -> ClassVerdict:
    """Decide whether {n : predicate(x1_n, x2_n, ...)} is big.

    Only the aligned tail matters: the prefix is a finite set of indices.
    """
    _, cycles = aligned(*xs)
    truths = [bool(predicate(*column)) for column in zip(*cycles)]
    if all(truths):
        return ClassVerdict.BIG
    if not any(truths):
        return ClassVerdict.SMALL
    return ClassVerdict.UNDETERMINED


def class_equal(x: HyperNumber, y: HyperNumber) -> bool:
    return index_set_verdict(operator.eq, x, y) is ClassVerdict.BIG


def order(x: HyperNumber, y: HyperNumber, strict: bool = True) -> OrderResult:
    """x < y (strict) or x <= y (non-strict) in the hyperreal order.

    With strict=False, LESS reads "x precedes-or-equals y holds".
    """
    verdict = index_set_verdict(operator.lt if strict else operator.le, x, y)
    if verdict is ClassVerdict.BIG:
        return OrderResult.LESS
    if verdict is ClassVerdict.SMALL:
        return OrderResult.NOT_LESS
    return OrderResult.UNDETERMINED


def precedes(x: HyperNumber, y: HyperNumber) -> OrderResult:
    return order(x, y, strict=True)


def precedes_or_equal(x: HyperNumber, y: HyperNumber) -> OrderResult:
    return order(x, y, strict=False)


def classify(x: HyperNumber) -> Magnitude:
    # limit reading: only a constant tail has a limit inside the fragment
    if not x.tail.is_constant:
        return Magnitude.NOT_CLASSIFIABLE
    if x.tail.values[0] == 0.0:
        return Magnitude.INFINITESIMAL
    return Magnitude.LIMITED


def limit_bound(x: HyperNumber) -> float:
    """A real M with |x_n| <= M for every n (two-sided boundedness).

    Every member of the fragment is limited; this returns the witness bound.
    """
    return max(abs(v) for v in x.prefix + x.tail.values)


def bounded_by(x: HyperNumber, bound: float) -> ClassVerdict:
    """One-sided boundedness test: is {n : x_n < bound} big."""
    return index_set_verdict(lambda v: v < bound, x)


def shadow(x: HyperNumber) -> float:
    if not x.tail.is_constant:
        raise NoShadowError(
            f"{format_hyper(x)} has a non-constant tail; its entries accumulate at {len(set(x.tail.values))} points"
        )
    return x.tail.values[0]


def infinitely_close(x: HyperNumber, y: HyperNumber) -> Truth:
    magnitude = classify(subtract(x, y))
    if magnitude is Magnitude.INFINITESIMAL:
        return Truth.YES
    if magnitude is Magnitude.LIMITED:
        return Truth.NO
    return Truth.UNDETERMINED


same_halo = infinitely_close


def require_hypernatural(x: HyperNumber, name: str = "value") -> None:
    entries = x.prefix + x.tail.values
    if not all(v.is_integer() and v >= 1 for v in entries):
        raise InvalidArgumentError(f"{name} must have positive integer entries, got {format_hyper(x)}")


def star_apply(fn: Callable[[float], float], x: HyperNumber) -> HyperNumber:
    """The extension *f of a real map, applied entry-wise."""
    return pointwise(fn, x)


def evaluate_at(sequence: HyperNumber, index: HyperNumber) -> HyperNumber:
    """Hypersequence value s_N = [(s_{N_n})] for a hypernatural N."""
    require_hypernatural(index, "index")
    prefix = tuple(sequence.entry(int(v)) for v in index.prefix)
    cycle = tuple(sequence.entry(int(v)) for v in index.tail.values)
    return HyperNumber(prefix, TailRule(cycle))


_HYPER_RE = re.compile(r"^\s*prefix\s*=\s*\[(?P<prefix>[^\]]*)\]\s*;\s*cycle\s*=\s*\[(?P<cycle>[^\]]*)\]\s*$")


def parse_hyper(text: str) -> HyperNumber:
    """Parse `prefix=[a1,...,ak];cycle=[c1,...,cm]`; a bare real is read as a constant."""
    match = _HYPER_RE.match(text)
    if match is None:
        try:
            return HyperNumber.constant(parse_real(text))
        except InvalidArgumentError:
            raise InvalidArgumentError(f"Cannot parse hypernumber: {text!r}")
    cycle = parse_real_list(match.group("cycle"))
    if not cycle:
        raise InvalidArgumentError(f"Empty tail cycle in {text!r}")
    return HyperNumber(tuple(parse_real_list(match.group("prefix"))), TailRule(tuple(cycle)))


def format_hyper(x: HyperNumber) -> str:
    prefix = ",".join(format_real(v) for v in x.prefix)
    cycle = ",".join(format_real(v) for v in x.tail.values)
    return f"prefix=[{prefix}];cycle=[{cycle}]"
