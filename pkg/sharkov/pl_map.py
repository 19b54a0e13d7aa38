"""
Continuous piecewise-linear maps on a closed interval [a, b].

Every map in the package is of this kind. PL maps are closed under
composition and under the bump perturbation, so sup-norms, interval images
and fixed points are computed exactly from the breakpoints, up to
floating-point rounding.
"""

import logging
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from sharkov.config import TAU_EQ
from sharkov.errors import DomainError, DomainMismatchError, InvalidArgumentError, InvarianceError
from sharkov.textio import format_real, parse_real

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not self.lo <= self.hi:
            raise InvalidArgumentError(f"Empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @classmethod
    def around(cls, center: float, radius: float) -> "Interval":
        return cls(center - radius, center + radius)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def is_degenerate(self) -> bool:
        return self.lo == self.hi

    def contains(self, x: float, open: bool = False) -> bool:
        if open:
            return self.lo < x < self.hi
        return self.lo <= x <= self.hi

    def contains_interval(self, other: "Interval", open: bool = False) -> bool:
        if open:
            return self.lo < other.lo and other.hi < self.hi
        return self.lo <= other.lo and other.hi <= self.hi

    def intersects(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def meets_open(self, other: "Interval") -> bool:
        """This closed interval meets the open interior of `other`."""
        return self.hi > other.lo and self.lo < other.hi and other.lo < other.hi

    def clipped(self, lo: float, hi: float) -> Optional["Interval"]:
        new_lo, new_hi = max(self.lo, lo), min(self.hi, hi)
        if new_lo > new_hi:
            return None
        return Interval(new_lo, new_hi)

    def widened(self, margin: float) -> "Interval":
        return Interval(self.lo - margin, self.hi + margin)

    def to_list(self) -> List[float]:
        return [self.lo, self.hi]


@dataclass(frozen=True)
class IntervalSet:
    """Finite union of disjoint closed intervals, sorted."""

    components: Tuple[Interval, ...] = ()

    @classmethod
    def from_intervals(cls, intervals: Iterable[Interval]) -> "IntervalSet":
        merged: List[Interval] = []
        for interval in sorted(intervals, key=lambda i: (i.lo, i.hi)):
            if merged and interval.lo <= merged[-1].hi:
                last = merged[-1]
                merged[-1] = Interval(last.lo, max(last.hi, interval.hi))
            else:
                merged.append(interval)
        return cls(tuple(merged))

    @property
    def is_empty(self) -> bool:
        return not self.components

    @property
    def total_length(self) -> float:
        return sum(c.length for c in self.components)

    def contains(self, x: float) -> bool:
        return any(c.contains(x) for c in self.components)

    def to_list(self) -> List[List[float]]:
        return [c.to_list() for c in self.components]


@dataclass(frozen=True)
class PiecewiseLinearMap:
    """Linear interpolation of (nodes, values); nodes[0] = a and nodes[-1] = b."""

    nodes: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self):
        nodes = tuple(float(x) for x in self.nodes)
        values = tuple(float(y) for y in self.values)
        if len(nodes) < 2 or len(nodes) != len(values):
            raise InvalidArgumentError(
                f"A PL map needs at least two nodes and one value per node (got {len(nodes)} nodes, {len(values)} values)"
            )
        if not all(np.isfinite(nodes)) or not all(np.isfinite(values)):
            raise InvalidArgumentError("PL map nodes and values must be finite")
        if any(x1 <= x0 for x0, x1 in zip(nodes, nodes[1:])):
            raise InvalidArgumentError("PL map nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    @property
    def a(self) -> float:
        return self.nodes[0]

    @property
    def b(self) -> float:
        return self.nodes[-1]

    @property
    def domain(self) -> Interval:
        return Interval(self.a, self.b)

    @property
    def segment_count(self) -> int:
        return len(self.nodes) - 1

    @property
    def slopes(self) -> List[float]:
        return [
            (y1 - y0) / (x1 - x0)
            for x0, x1, y0, y1 in zip(self.nodes, self.nodes[1:], self.values, self.values[1:])
        ]

    @property
    def value_range(self) -> Interval:
        return Interval(min(self.values), max(self.values))

    @cached_property
    def _xs(self) -> np.ndarray:
        return np.asarray(self.nodes, dtype=float)

    @cached_property
    def _ys(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def _admit(self, x: float) -> float:
        if x < self.a - TAU_EQ or x > self.b + TAU_EQ:
            raise DomainError(f"x = {x!r} outside domain [{self.a}, {self.b}]")
        return min(max(x, self.a), self.b)

    def evaluate(self, x: float) -> float:
        x = self._admit(float(x))
        i = bisect_right(self.nodes, x) - 1
        if i >= len(self.nodes) - 1:
            return self.values[-1]
        x0, x1 = self.nodes[i], self.nodes[i + 1]
        if x == x0:
            return self.values[i]
        y0, y1 = self.values[i], self.values[i + 1]
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0)

    __call__ = evaluate

    def evaluate_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.size and (xs.min() < self.a - TAU_EQ or xs.max() > self.b + TAU_EQ):
            raise DomainError(f"Sample outside domain [{self.a}, {self.b}]")
        return np.interp(np.clip(xs, self.a, self.b), self._xs, self._ys)

    def shifted(self, offset: float) -> "PiecewiseLinearMap":
        return PiecewiseLinearMap(self.nodes, tuple(y + offset for y in self.values))

    def normalized(self, tol: float = 1e-13) -> "PiecewiseLinearMap":
        """Drop interior nodes lying on the segment joining their neighbours."""
        keep_x = [self.nodes[0]]
        keep_y = [self.values[0]]
        for i in range(1, len(self.nodes) - 1):
            x0, y0 = keep_x[-1], keep_y[-1]
            x1, y1 = self.nodes[i], self.values[i]
            x2, y2 = self.nodes[i + 1], self.values[i + 1]
            predicted = y0 + (y2 - y0) * (x1 - x0) / (x2 - x0)
            if abs(predicted - y1) > tol:
                keep_x.append(x1)
                keep_y.append(y1)
        keep_x.append(self.nodes[-1])
        keep_y.append(self.values[-1])
        return PiecewiseLinearMap(tuple(keep_x), tuple(keep_y))

    def to_dict(self) -> dict:
        return {"domain": [self.a, self.b], "nodes": list(self.nodes), "values": list(self.values)}


def identity(a: float = 0.0, b: float = 1.0) -> PiecewiseLinearMap:
    return PiecewiseLinearMap((a, b), (a, b))


def constant(c: float, a: float = 0.0, b: float = 1.0) -> PiecewiseLinearMap:
    return PiecewiseLinearMap((a, b), (c, c))


def tent(peak: float = 1.0) -> PiecewiseLinearMap:
    return PiecewiseLinearMap((0.0, 0.5, 1.0), (0.0, peak, 0.0))


def random_map(
    rng: np.random.Generator,
    segments: int = 4,
    a: float = 0.0,
    b: float = 1.0,
    low: Optional[float] = None,
    high: Optional[float] = None,
) -> PiecewiseLinearMap:
    """Random PL self-map of [a, b] with values in [low, high] (default the whole domain)."""
    low = a if low is None else low
    high = b if high is None else high
    interior = np.sort(rng.uniform(a, b, size=max(0, segments - 1)))
    nodes = [a] + [float(x) for x in interior if a < x < b] + [b]
    nodes = sorted(set(nodes))
    values = rng.uniform(low, high, size=len(nodes))
    return PiecewiseLinearMap(tuple(nodes), tuple(float(v) for v in values))


def evaluate(f: PiecewiseLinearMap, x: float) -> float:
    return f.evaluate(x)


def lipschitz_constant(f: PiecewiseLinearMap) -> float:
    return max(abs(s) for s in f.slopes)


def merged_nodes(*maps: PiecewiseLinearMap) -> List[float]:
    return sorted(set().union(*(m.nodes for m in maps)))


def _same_domain(f: PiecewiseLinearMap, g: PiecewiseLinearMap) -> bool:
    return abs(f.a - g.a) <= TAU_EQ and abs(f.b - g.b) <= TAU_EQ


def solve_segment(x0: float, x1: float, y0: float, y1: float, lo: float, hi: float) -> Optional[Tuple[float, float]]:
    """Sub-interval of [x0, x1] on which the segment's value lies in [lo, hi]."""
    if y0 == y1:
        return (x0, x1) if lo <= y0 <= hi else None
    t_lo = (lo - y0) / (y1 - y0)
    t_hi = (hi - y0) / (y1 - y0)
    t_min, t_max = max(0.0, min(t_lo, t_hi)), min(1.0, max(t_lo, t_hi))
    if t_min > t_max:
        return None
    return x0 + t_min * (x1 - x0), x0 + t_max * (x1 - x0)


def compose(g: PiecewiseLinearMap, f: PiecewiseLinearMap) -> PiecewiseLinearMap:
    """g o f, with breakpoints at f's nodes and at f-preimages of g's nodes."""
    for i, y in enumerate(f.values):
        if y < g.a - TAU_EQ or y > g.b + TAU_EQ:
            raise InvarianceError(
                f"Inner map leaves [{g.a}, {g.b}]: f({f.nodes[i]!r}) = {y!r}",
                point=f.nodes[i],
                index=i,
            )

    points = {x: g.evaluate(y) for x, y in zip(f.nodes, f.values)}
    for x0, x1, y0, y1 in zip(f.nodes, f.nodes[1:], f.values, f.values[1:]):
        if y0 == y1:
            continue
        lo, hi = min(y0, y1), max(y0, y1)
        start = bisect_right(g.nodes, lo)
        stop = bisect_left(g.nodes, hi)
        for j in range(start, stop):
            c = g.nodes[j]
            x = x0 + (c - y0) * (x1 - x0) / (y1 - y0)
            if x0 < x < x1 and x not in points:
                points[x] = g.values[j]

    xs = sorted(points)
    return PiecewiseLinearMap(tuple(xs), tuple(points[x] for x in xs)).normalized()


def iterate_map(f: PiecewiseLinearMap, k: int) -> PiecewiseLinearMap:
    if k < 0:
        raise InvalidArgumentError(f"Iteration count must be non-negative, got {k}")
    result = identity(f.a, f.b)
    for _ in range(k):
        result = compose(f, result)
    return result


def restrict(f: PiecewiseLinearMap, interval: Interval) -> PiecewiseLinearMap:
    if interval.is_degenerate:
        raise InvalidArgumentError("Cannot restrict a map to a single point")
    lo, hi = f._admit(interval.lo), f._admit(interval.hi)
    inner = [x for x in f.nodes if lo < x < hi]
    nodes = [lo] + inner + [hi]
    return PiecewiseLinearMap(tuple(nodes), tuple(f.evaluate(x) for x in nodes))


def iterate_map_on(f: PiecewiseLinearMap, k: int, interval: Interval) -> PiecewiseLinearMap:
    """f^k restricted to a sub-interval; stays small where the full f^k would not."""
    result = restrict(identity(f.a, f.b), interval)
    for _ in range(k):
        result = compose(f, result)
    return result


def iterate(f: PiecewiseLinearMap, k: int, x: float) -> float:
    if k < 0:
        raise InvalidArgumentError(f"Iteration count must be non-negative, got {k}")
    for step in range(1, k + 1):
        if x < f.a - TAU_EQ or x > f.b + TAU_EQ:
            raise InvarianceError(f"Orbit left [{f.a}, {f.b}] before step {step}: x = {x!r}", point=x, index=step - 1)
        x = f.evaluate(x)
    return x


def orbit(f: PiecewiseLinearMap, x: float, steps: int) -> List[float]:
    points = [float(x)]
    for _ in range(steps):
        points.append(iterate(f, 1, points[-1]))
    return points


def iterate_array(f: PiecewiseLinearMap, k: int, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    for step in range(1, k + 1):
        if xs.size and (xs.min() < f.a - TAU_EQ or xs.max() > f.b + TAU_EQ):
            worst = xs.min() if xs.min() < f.a - TAU_EQ else xs.max()
            raise InvarianceError(f"Grid orbit left [{f.a}, {f.b}] before step {step}", point=float(worst), index=step - 1)
        xs = f.evaluate_many(xs)
    return xs


def sup_distance(f: PiecewiseLinearMap, g: PiecewiseLinearMap) -> float:
    """Uniform norm of f - g; attained at a merged breakpoint since f - g is PL."""
    if not _same_domain(f, g):
        raise DomainMismatchError(f"Domains differ: [{f.a}, {f.b}] vs [{g.a}, {g.b}]")
    xs = np.asarray(merged_nodes(f, g))
    xs = np.clip(xs, max(f.a, g.a), min(f.b, g.b))
    return float(np.max(np.abs(f.evaluate_many(xs) - g.evaluate_many(xs))))


def maps_equal(f: PiecewiseLinearMap, g: PiecewiseLinearMap, tol: float = TAU_EQ) -> bool:
    return _same_domain(f, g) and sup_distance(f, g) <= tol


def modulus_of_continuity(f: PiecewiseLinearMap, tau: float) -> float:
    """eta(tau) with |x - y| < eta  =>  |f(x) - f(y)| < tau / 2."""
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    lipschitz = lipschitz_constant(f)
    if lipschitz == 0.0:
        return tau / 2
    return tau / (2 * lipschitz)


def image(f: PiecewiseLinearMap, interval: Interval) -> Interval:
    lo, hi = f._admit(interval.lo), f._admit(interval.hi)
    candidates = [f.evaluate(lo), f.evaluate(hi)]
    start, stop = bisect_right(f.nodes, lo), bisect_left(f.nodes, hi)
    candidates.extend(f.values[start:stop])
    return Interval(min(candidates), max(candidates))


def image_iter(f: PiecewiseLinearMap, k: int, interval: Interval) -> Interval:
    current = interval
    for step in range(1, k + 1):
        if current.lo < f.a - TAU_EQ or current.hi > f.b + TAU_EQ:
            escaped = current.lo if current.lo < f.a - TAU_EQ else current.hi
            raise InvarianceError(
                f"Image after {step - 1} steps, [{current.lo}, {current.hi}], leaves [{f.a}, {f.b}]",
                point=escaped,
                index=step - 1,
            )
        current = image(f, current)
    return current


def preimage(f: PiecewiseLinearMap, interval: Interval) -> IntervalSet:
    pieces = []
    for x0, x1, y0, y1 in zip(f.nodes, f.nodes[1:], f.values, f.values[1:]):
        solved = solve_segment(x0, x1, y0, y1, interval.lo, interval.hi)
        if solved is not None:
            pieces.append(Interval(*solved))
    return IntervalSet.from_intervals(pieces)


def format_map(f: PiecewiseLinearMap) -> str:
    return (
        f"domain {format_real(f.a)} {format_real(f.b)}\n"
        f"nodes {' '.join(format_real(x) for x in f.nodes)}\n"
        f"values {' '.join(format_real(y) for y in f.values)}\n"
    )


def parse_map(text: str) -> PiecewiseLinearMap:
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        fields[key] = [parse_real(token) for token in rest.split()]
    missing = {"domain", "nodes", "values"} - set(fields)
    if missing:
        raise InvalidArgumentError(f"Map text is missing line(s): {', '.join(sorted(missing))}")
    if len(fields["domain"]) != 2:
        raise InvalidArgumentError("The domain line needs exactly two numbers")
    f = PiecewiseLinearMap(tuple(fields["nodes"]), tuple(fields["values"]))
    a, b = fields["domain"]
    if f.a != a or f.b != b:
        raise InvalidArgumentError(f"Domain [{a}, {b}] does not match first/last node [{f.a}, {f.b}]")
    return f


def load_map(path: Union[str, Path]) -> PiecewiseLinearMap:
    return parse_map(Path(path).read_text(encoding="utf-8"))


def save_map(f: PiecewiseLinearMap, path: Union[str, Path]) -> None:
    Path(path).write_text(format_map(f), encoding="utf-8")
    logger.info(f"Map saved to {path}")
