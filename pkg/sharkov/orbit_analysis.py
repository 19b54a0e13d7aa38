"""
Periodic orbits, first returns of neighborhoods, and point classification.

Periodic points of period p are the roots of f^p(x) - x. For p <= EXACT_PERIOD_LIMIT
f^p is built as an exact PL map and each segment is solved linearly; above that
the breakpoint count is too large and the scan falls back to pointwise
iteration on a grid, each sign change refined with scipy's brentq.
"""

import logging
from bisect import bisect_left, insort
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from sharkov.config import TAU_EQ, worker_count
from sharkov.errors import InvalidArgumentError, NoWitnessError
from sharkov.pl_map import Interval, PiecewiseLinearMap, image_iter, iterate, iterate_array, iterate_map, orbit
from sharkov.sharkovskii_order import forced_periods

logger = logging.getLogger(__name__)

EXACT_PERIOD_LIMIT = 12
ROOT_TOL = 1e-10
BRACKET_XTOL = 1e-5 * ROOT_TOL
SEPARATION = 1e-6
ORBIT_DEDUP = 1e-9
FORCING_GRID_DOUBLINGS = 4


@dataclass
class PeriodicOrbit:
    point: float
    period: int
    orbit: List[float]
    residual: float
    mode: str = "exact"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "point": self.point,
            "period": self.period,
            "orbit": list(self.orbit),
            "residual": self.residual,
            "mode": self.mode,
        }


def default_grid(p: int) -> int:
    return max(1024, 64 * p)


def proper_divisors(p: int) -> List[int]:
    return [d for d in range(1, p) if p % d == 0]


def _exact_candidates(f: PiecewiseLinearMap, p: int) -> List[Tuple[float, Optional[Tuple[float, float]]]]:
    """Linear roots of f^p(x) - x on each segment of the exact PL map f^p."""
    h = iterate_map(f, p)
    d = [y - x for x, y in zip(h.nodes, h.values)]
    found = []
    previous_zero = False
    for i, x in enumerate(h.nodes):
        is_zero = abs(d[i]) <= TAU_EQ
        if is_zero and not previous_zero:
            found.append((x, None))
        previous_zero = is_zero
        if i + 1 < len(h.nodes) and not is_zero and abs(d[i + 1]) > TAU_EQ and (d[i] < 0) != (d[i + 1] < 0):
            x1 = h.nodes[i + 1]
            root = x - d[i] * (x1 - x) / (d[i + 1] - d[i])
            found.append((root, (x, x1)))
    return found


def _grid_candidates(f: PiecewiseLinearMap, p: int, grid: int) -> List[Tuple[float, Optional[Tuple[float, float]]]]:
    xs = np.linspace(f.a, f.b, grid + 1)
    d = iterate_array(f, p, xs) - xs
    found = []
    previous_zero = False
    for i in range(len(xs)):
        is_zero = abs(d[i]) <= TAU_EQ
        if is_zero and not previous_zero:
            found.append((float(xs[i]), None))
        previous_zero = is_zero
        if i + 1 < len(xs) and not is_zero and abs(d[i + 1]) > TAU_EQ and (d[i] < 0) != (d[i + 1] < 0):
            found.append((0.5 * float(xs[i] + xs[i + 1]), (float(xs[i]), float(xs[i + 1]))))
    return found


def _already_seen(seen: List[float], x: float) -> bool:
    """Membership within ORBIT_DEDUP of the sorted list `seen`."""
    i = bisect_left(seen, x)
    return any(abs(seen[j] - x) <= ORBIT_DEDUP for j in (i - 1, i) if 0 <= j < len(seen))


def find_periodic_points(f: PiecewiseLinearMap, p: int, grid: Optional[int] = None) -> List[PeriodicOrbit]:
    """Orbits of minimal period p, each reported once from its smallest point."""
    if p < 1:
        raise InvalidArgumentError(f"Period must be positive, got {p}")
    exact = p <= EXACT_PERIOD_LIMIT
    grid = grid or default_grid(p)
    candidates = _exact_candidates(f, p) if exact else _grid_candidates(f, p, grid)

    def residual_at(x: float) -> float:
        return iterate(f, p, x) - x

    def refine(candidate: Tuple[float, Optional[Tuple[float, float]]]) -> float:
        x, bracket = candidate
        if bracket is None or abs(residual_at(x)) <= ROOT_TOL:
            return x
        lo, hi = bracket
        if (residual_at(lo) < 0) == (residual_at(hi) < 0):
            return x
        return float(brentq(residual_at, lo, hi, xtol=BRACKET_XTOL, maxiter=200))

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        roots = list(pool.map(refine, candidates))

    orbits: List[PeriodicOrbit] = []
    seen: List[float] = []
    for x in sorted(roots):
        residual = abs(residual_at(x))
        if residual > ROOT_TOL:
            logger.debug(f"Dropping p={p} candidate {x!r}: residual {residual!r}")
            continue
        if any(abs(iterate(f, d, x) - x) <= SEPARATION for d in proper_divisors(p)):
            continue
        points = orbit(f, x, p - 1)
        if any(_already_seen(seen, q) for q in points):
            continue
        for q in points:
            insort(seen, q)
        orbits.append(PeriodicOrbit(point=x, period=p, orbit=points, residual=residual, mode="exact" if exact else "pointwise"))

    logger.info(f"Found {len(orbits)} orbit(s) of period {p} ({'exact' if exact else f'pointwise, grid {grid}'})")
    return orbits


def closure_in_domain(f: PiecewiseLinearMap, window: Interval) -> Interval:
    closure = window.clipped(f.a, f.b)
    if closure is None:
        raise InvalidArgumentError(f"Neighborhood ({window.lo}, {window.hi}) misses [{f.a}, {f.b}]")
    return closure


def first_return(f: PiecewiseLinearMap, window: Interval, max_time: int) -> Optional[int]:
    """Least k <= max_time with f^k(closure(V)) meeting the open V, else None."""
    current = closure_in_domain(f, window)
    for k in range(1, max_time + 1):
        current = image_iter(f, 1, current)
        if current.meets_open(window):
            return k
    return None


def returns_at(f: PiecewiseLinearMap, window: Interval, k: int) -> bool:
    """f^k(closure(V)) meets V; says nothing about smaller times."""
    if k < 1:
        raise InvalidArgumentError(f"Return time must be positive, got {k}")
    return image_iter(f, k, closure_in_domain(f, window)).meets_open(window)


@dataclass
class ReturnEntry:
    n: int
    delta_n: float
    first_return: Optional[int]
    witness: Optional[float] = None
    witness_status: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "delta_n": self.delta_n,
            "first_return": self.first_return,
            "witness": self.witness,
            "witness_status": self.witness_status,
            "certified": "first-return" if self.first_return is not None else None,
        }


@dataclass
class ReturnProfile:
    x0: float
    entries: List[ReturnEntry] = field(default_factory=list)

    @property
    def return_times(self) -> List[Optional[int]]:
        return [entry.first_return for entry in self.entries]

    def to_dict(self) -> Dict[str, Any]:
        return {"x0": self.x0, "entries": [entry.to_dict() for entry in self.entries]}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([entry.to_dict() for entry in self.entries])


def return_profile(f: PiecewiseLinearMap, x0: float, deltas: Sequence[float], max_time: int) -> ReturnProfile:
    from sharkov.perturbation import find_witness

    if any(not d > 0 for d in deltas):
        raise InvalidArgumentError("Every radius in a return profile must be positive")
    if any(d1 > d0 for d0, d1 in zip(deltas, deltas[1:])):
        logger.warning("Return-profile radii are not decreasing")

    def profile_entry(item: Tuple[int, float]) -> ReturnEntry:
        n, delta_n = item
        R = first_return(f, Interval.around(x0, delta_n), max_time)
        entry = ReturnEntry(n=n, delta_n=delta_n, first_return=R)
        if R is not None:
            try:
                witness = find_witness(f, x0, delta_n, max_time)
                entry.witness = witness.y
                entry.witness_status = witness.status.value
            except NoWitnessError as e:
                logger.info(f"n={n}: {e}")
        return entry

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        entries = list(pool.map(profile_entry, enumerate(deltas, start=1)))
    return ReturnProfile(x0=float(x0), entries=entries)


@dataclass
class ForcingEntry:
    q: int
    orbit: Optional[PeriodicOrbit]
    grid: Optional[int]
    attempts: int

    @property
    def found(self) -> bool:
        return self.orbit is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q": self.q,
            "found": self.found,
            "residual": self.orbit.residual if self.orbit else None,
            "point": self.orbit.point if self.orbit else None,
            "mode": self.orbit.mode if self.orbit else None,
            "grid": self.grid,
            "attempts": self.attempts,
        }


@dataclass
class ForcingReport:
    p: int
    bound: int
    source_orbit: Optional[PeriodicOrbit]
    entries: List[ForcingEntry] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return all(entry.found for entry in self.entries)

    @property
    def missing(self) -> List[int]:
        return [entry.q for entry in self.entries if not entry.found]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "bound": self.bound,
            "source_orbit": self.source_orbit.to_dict() if self.source_orbit else None,
            "complete": self.complete,
            "missing": self.missing,
            "entries": [entry.to_dict() for entry in self.entries],
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([entry.to_dict() for entry in self.entries], columns=["q", "found", "residual", "point", "mode", "grid", "attempts"])


def verify_forcing(f: PiecewiseLinearMap, p: int, bound: int) -> ForcingReport:
    logger.info("=" * 80)
    logger.info(f"FORCING CHECK: period {p}, bound {bound}")
    logger.info("=" * 80)

    source = find_periodic_points(f, p)
    if not source:
        logger.warning(f"No certified period-{p} orbit; forced periods are not guaranteed")
    report = ForcingReport(p=p, bound=bound, source_orbit=source[0] if source else None)

    for q in forced_periods(p, bound):
        if q <= EXACT_PERIOD_LIMIT:
            orbits = find_periodic_points(f, q)
            report.entries.append(ForcingEntry(q=q, orbit=orbits[0] if orbits else None, grid=None, attempts=1))
            continue
        grid = default_grid(q)
        found = None
        attempts = 0
        for attempts in range(1, FORCING_GRID_DOUBLINGS + 2):
            orbits = find_periodic_points(f, q, grid=grid)
            if orbits:
                found = orbits[0]
                break
            grid *= 2
        report.entries.append(ForcingEntry(q=q, orbit=found, grid=grid, attempts=attempts))

    if report.complete:
        logger.info(f"All {len(report.entries)} forced periods detected")
    else:
        logger.warning(f"Detection gaps at q = {report.missing}")
    return report


class PointKind(Enum):
    PERIODIC = "periodic"
    RECURRENT = "recurrent"
    NON_WANDERING = "non-wandering"
    WANDERING_AT_SCALE = "wandering-at-scale"


@dataclass
class PointClassification:
    x0: float
    kind: PointKind
    period: Optional[int] = None
    failing_radius: Optional[float] = None
    return_times: List[Optional[int]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x0": self.x0,
            "kind": self.kind.value,
            "period": self.period,
            "failing_radius": self.failing_radius,
            "return_times": list(self.return_times),
        }


def classify_point(
    f: PiecewiseLinearMap,
    x0: float,
    radii: Sequence[float],
    max_time: int,
    tol: float = ORBIT_DEDUP,
) -> PointClassification:
    """Strongest of periodic / recurrent / non-wandering that holds at the given scales."""
    points = orbit(f, x0, max_time)
    for k in range(1, max_time + 1):
        if abs(points[k] - x0) <= tol:
            return PointClassification(x0=x0, kind=PointKind.PERIODIC, period=k)

    if all(any(abs(points[k] - x0) < r for k in range(1, max_time + 1)) for r in radii):
        return PointClassification(x0=x0, kind=PointKind.RECURRENT)

    return_times = [first_return(f, Interval.around(x0, r), max_time) for r in radii]
    for r, R in zip(radii, return_times):
        if R is None:
            return PointClassification(
                x0=x0, kind=PointKind.WANDERING_AT_SCALE, failing_radius=r, return_times=return_times
            )
    return PointClassification(x0=x0, kind=PointKind.NON_WANDERING, return_times=return_times)


def orbit_frame(f: PiecewiseLinearMap, x: float, steps: int) -> pd.DataFrame:
    """Orbit series for external plotters."""
    points = orbit(f, x, steps)
    return pd.DataFrame({"step": range(len(points)), "x": points})
