"""
Bump perturbation that turns an approximate return into an exact periodic orbit.

Given a neighborhood V = (x0 - delta, x0 + delta) with first return R and a
witness y such that y and f^R(y) both lie in V, the map g = T o f with

    T(t) = t + (y - f^R(y)) * phi(t)

closes the orbit exactly: g^R(y) = y. Here phi is a PL trapezoid equal to 1
on I = [y, f^R(y)] and to 0 outside J = I widened by zeta, with J inside V.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from sharkov.certificates import Certificate
from sharkov.config import TAU_EQ
from sharkov.errors import DisplacementTooLargeError, InvalidArgumentError, InvarianceError, NoReturnError, NoWitnessError
from sharkov.orbit_analysis import first_return
from sharkov.pl_map import (
    Interval,
    PiecewiseLinearMap,
    compose,
    format_map,
    identity,
    iterate,
    iterate_map_on,
    lipschitz_constant,
    maps_equal,
    merged_nodes,
    solve_segment,
    sup_distance,
)

logger = logging.getLogger(__name__)

ZETA_FLOOR = 1e-9
AGREEMENT_SAMPLES = 257


class WitnessStatus(Enum):
    STRONG = "strong"
    WEAK = "weak"


@dataclass(frozen=True)
class Witness:
    y: float
    return_time: int
    status: WitnessStatus
    displacement: float

    def __iter__(self):
        # unpacks as (y, R)
        return iter((self.y, self.return_time))


@dataclass
class PerturbationPlan:
    index_n: int
    x0: float
    delta_n: float
    witness: float
    return_time: int
    target: float
    displacement: float
    status: WitnessStatus
    inner: Interval
    zeta: float
    outer: Interval
    phi: PiecewiseLinearMap
    translation: PiecewiseLinearMap
    perturbed: PiecewiseLinearMap
    degenerate: bool

    @property
    def neighborhood(self) -> Interval:
        return Interval.around(self.x0, self.delta_n)

    @property
    def shift(self) -> float:
        """Translation actually applied on the inner interval."""
        return 0.0 if self.degenerate else self.displacement

    @property
    def displacement_limit(self) -> float:
        return self.delta_n if self.status is WitnessStatus.STRONG else 2 * self.delta_n

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index_n": self.index_n,
            "x0": self.x0,
            "delta_n": self.delta_n,
            "neighborhood": self.neighborhood.to_list(),
            "witness": self.witness,
            "return_time": self.return_time,
            "target": self.target,
            "displacement": self.displacement,
            "witness_status": self.status.value,
            "degenerate": self.degenerate,
            "inner": self.inner.to_list(),
            "zeta": self.zeta,
            "outer": self.outer.to_list(),
            "phi": self.phi.to_dict(),
            "translation": self.translation.to_dict(),
            "perturbed": format_map(self.perturbed),
        }


def _open_membership(window: Interval, x: float) -> bool:
    return window.contains(x, open=True)


def _candidate_components(h: PiecewiseLinearMap, window: Interval, max_gap: Optional[float]) -> List[Interval]:
    """Pieces of dom(h) where h lands in the window and, if given, |h(y) - y| <= max_gap."""
    pieces = []
    for x0, x1, y0, y1 in zip(h.nodes, h.nodes[1:], h.values, h.values[1:]):
        landing = solve_segment(x0, x1, y0, y1, window.lo, window.hi)
        if landing is None:
            continue
        lo, hi = landing
        if max_gap is not None:
            gap = solve_segment(x0, x1, y0 - x0, y1 - x1, -max_gap, max_gap)
            if gap is None:
                continue
            lo, hi = max(lo, gap[0]), min(hi, gap[1])
            if lo > hi:
                continue
        pieces.append(Interval(lo, hi))
    return pieces


def _distance_to(interval: Interval, x: float) -> float:
    if interval.contains(x):
        return 0.0
    return min(abs(interval.lo - x), abs(interval.hi - x))


def find_witness(f: PiecewiseLinearMap, x0: float, delta_n: float, max_time: int) -> Witness:
    """Locate y with y and f^R(y) in V, R being the first return of V.

    Prefers x0 itself, then the component of exact strong witnesses nearest
    x0 (|f^R(y) - y| < delta_n), and only then a weak witness.
    """
    if not delta_n > 0:
        raise InvalidArgumentError(f"delta_n must be positive, got {delta_n}")
    window = Interval.around(x0, delta_n)
    R = first_return(f, window, max_time)
    if R is None:
        raise NoReturnError(f"No return of ({window.lo}, {window.hi}) within {max_time} steps")

    def verdict(y: float) -> Optional[Witness]:
        target = iterate(f, R, y)
        if not (_open_membership(window, y) and _open_membership(window, target)):
            return None
        gap = abs(target - y)
        status = WitnessStatus.STRONG if gap < delta_n else WitnessStatus.WEAK
        return Witness(y=y, return_time=R, status=status, displacement=target - y)

    if f.a <= x0 <= f.b:
        candidate = verdict(x0)
        if candidate is not None and candidate.status is WitnessStatus.STRONG:
            logger.debug(f"Witness is x0 = {x0!r} itself (R = {R})")
            return candidate

    closure = window.clipped(f.a, f.b)
    h = iterate_map_on(f, R, closure)

    strong = sorted(_candidate_components(h, window, max_gap=delta_n), key=lambda c: (_distance_to(c, x0), c.lo))
    for component in strong:
        candidate = verdict(component.midpoint)
        if candidate is not None and candidate.status is WitnessStatus.STRONG:
            logger.debug(f"Strong witness y = {candidate.y!r} (R = {R}, gap {abs(candidate.displacement)!r})")
            return candidate

    weak = []
    for component in _candidate_components(h, window, max_gap=None):
        candidate = verdict(component.midpoint)
        if candidate is not None:
            weak.append(candidate)
    if not weak:
        raise NoWitnessError(f"No y with y and f^{R}(y) in ({window.lo}, {window.hi})")
    best = min(weak, key=lambda w: (abs(w.displacement), abs(w.y - x0)))
    logger.warning(f"Only a weak witness found near x0 = {x0!r}: gap {abs(best.displacement)!r} >= delta {delta_n!r}")
    return best


def _trapezoid(x: float, inner: Interval, outer: Interval) -> float:
    if inner.contains(x):
        return 1.0
    if x <= outer.lo or x >= outer.hi:
        return 0.0
    if x < inner.lo:
        return (x - outer.lo) / (inner.lo - outer.lo)
    return (outer.hi - x) / (outer.hi - inner.hi)


def bump(inner: Interval, outer: Interval, a: float, b: float) -> PiecewiseLinearMap:
    """PL trapezoid on [a, b]: 1 on inner, 0 outside outer, linear ramps between."""
    candidates = {a, b}
    candidates.update(x for x in (outer.lo, inner.lo, inner.hi, outer.hi) if a < x < b)
    nodes = sorted(candidates)
    return PiecewiseLinearMap(tuple(nodes), tuple(_trapezoid(x, inner, outer) for x in nodes))


def translation_map(phi: PiecewiseLinearMap, shift: float) -> PiecewiseLinearMap:
    return PiecewiseLinearMap(phi.nodes, tuple(x + shift * v for x, v in zip(phi.nodes, phi.values)))


def _check_range(g: PiecewiseLinearMap) -> None:
    for x, y in zip(g.nodes, g.values):
        if y < g.a - TAU_EQ or y > g.b + TAU_EQ:
            raise InvarianceError(f"Perturbed map leaves [{g.a}, {g.b}]: g({x!r}) = {y!r}", point=x)


def build_perturbation(
    f: PiecewiseLinearMap,
    x0: float,
    delta_n: float,
    y_n: float,
    R_n: int,
    index_n: int = 1,
    status: WitnessStatus = WitnessStatus.STRONG,
) -> PerturbationPlan:
    if R_n < 1:
        raise InvalidArgumentError(f"Return time must be positive, got {R_n}")
    window = Interval.around(x0, delta_n)
    target = iterate(f, R_n, y_n)
    if not (_open_membership(window, y_n) and _open_membership(window, target)):
        raise InvalidArgumentError(f"Witness y = {y_n!r} and f^{R_n}(y) = {target!r} must both lie in V")

    displacement = y_n - target
    limit = delta_n if status is WitnessStatus.STRONG else 2 * delta_n
    if abs(displacement) >= limit:
        raise DisplacementTooLargeError(f"|y - f^{R_n}(y)| = {abs(displacement)!r} >= {limit!r}")

    inner = Interval(min(y_n, target), max(y_n, target))
    slack = min(inner.lo - window.lo, window.hi - inner.hi)
    zeta = max(min(delta_n / 4, slack / 2), ZETA_FLOOR)
    outer = inner.widened(zeta)
    degenerate = abs(displacement) <= TAU_EQ

    phi = bump(inner, outer, f.a, f.b)
    if degenerate:
        translation = identity(f.a, f.b)
        perturbed = f
    else:
        translation = translation_map(phi, displacement)
        perturbed = compose(translation, f)
        _check_range(perturbed)

    logger.debug(
        f"Plan n={index_n}: y={y_n!r}, R={R_n}, displacement={displacement!r}, zeta={zeta!r}, degenerate={degenerate}"
    )
    return PerturbationPlan(
        index_n=index_n,
        x0=float(x0),
        delta_n=float(delta_n),
        witness=float(y_n),
        return_time=R_n,
        target=target,
        displacement=displacement,
        status=status,
        inner=inner,
        zeta=zeta,
        outer=outer,
        phi=phi,
        translation=translation,
        perturbed=perturbed,
        degenerate=degenerate,
    )


def plan_from_witness(f: PiecewiseLinearMap, x0: float, delta_n: float, witness: Witness, index_n: int = 1) -> PerturbationPlan:
    return build_perturbation(f, x0, delta_n, witness.y, witness.return_time, index_n=index_n, status=witness.status)


def return_tolerance(f: PiecewiseLinearMap, steps: int) -> float:
    """Rounding allowance for a `steps`-fold orbit; errors grow at most by L per step."""
    growth = max(1.0, lipschitz_constant(f)) ** max(steps, 1)
    return TAU_EQ * min(growth, 1e6)


def certify(plan: PerturbationPlan, f: PiecewiseLinearMap) -> Certificate:
    """Re-derive T and g from the stored bump and re-check every claim of the construction."""
    cert = Certificate(subject=f"perturbation n={plan.index_n}")
    y, R = plan.witness, plan.return_time
    window = plan.neighborhood
    tol = return_tolerance(f, R)

    target = iterate(f, R, y)
    shift = 0.0 if plan.degenerate else y - target
    translation = translation_map(plan.phi, shift)
    g = compose(translation, f)

    closed = abs(iterate(g, R, y) - y)
    cert.add("a:periodic-return", closed <= tol, residual=closed, detail=f"|g^{R}(y) - y|")

    mismatch = 0.0
    distinct = True
    for ell in range(1, R):
        f_ell = iterate(f, ell, y)
        mismatch = max(mismatch, abs(iterate(g, ell, y) - f_ell))
        distinct = distinct and abs(f_ell - y) > TAU_EQ
    cert.add(
        "b:orbit-matches-before-return",
        mismatch <= tol and distinct,
        residual=mismatch,
        detail="g^l(y) = f^l(y) != y for 1 <= l < R",
    )

    distance = sup_distance(f, g)
    gap = abs(distance - abs(shift))
    cert.add(
        "c:sup-distance",
        gap <= TAU_EQ and distance < plan.displacement_limit,
        residual=gap,
        detail=f"||f - g|| = {distance!r}, limit {plan.displacement_limit!r} ({plan.status.value} witness)",
    )

    samples = np.union1d(np.asarray(merged_nodes(f, g)), np.linspace(f.a, f.b, AGREEMENT_SAMPLES))
    f_vals, g_vals = f.evaluate_many(samples), g.evaluate_many(samples)
    outside = (f_vals < plan.outer.lo) | (f_vals > plan.outer.hi)
    disagreement = float(np.max(np.abs(f_vals - g_vals)[outside])) if outside.any() else 0.0
    cert.add("d:agrees-outside-preimage", disagreement <= TAU_EQ, residual=disagreement, detail="g = f off f^-1(J)")

    phi_vals = np.asarray(plan.phi.values)
    shape_ok = (
        bool(np.all((phi_vals >= 0.0) & (phi_vals <= 1.0)))
        and plan.outer.contains_interval(plan.inner)
        and window.contains_interval(plan.outer, open=True)
        and all(abs(plan.phi(x) - 1.0) <= TAU_EQ for x in (plan.inner.lo, plan.inner.midpoint, plan.inner.hi))
        and all(abs(plan.phi(x)) <= TAU_EQ for x in plan.phi.nodes if not plan.outer.contains(x, open=True))
    )
    cert.add("bump-shape", shape_ok, detail="0 <= phi <= 1, phi = 1 on I, phi = 0 off J, I in J in V")

    touching = [ell for ell in range(1, R) if plan.phi(iterate(f, ell, y)) != 0.0]
    cert.add(
        "orbit-avoidance",
        not touching,
        detail="f^l(y) outside J for 1 <= l < R" if not touching else f"orbit enters J at l = {touching}",
    )

    if plan.perturbed.domain == g.domain:
        stored_gap = sup_distance(plan.perturbed, g)
    else:
        stored_gap = float("inf")
    cert.add("stored-map-consistent", maps_equal(plan.perturbed, g), residual=stored_gap)

    escaped = max(max(g.values) - g.b, g.a - min(g.values), 0.0)
    cert.add("range-in-domain", escaped <= TAU_EQ, residual=escaped)

    if not cert.passed:
        logger.info(f"Certificate for n={plan.index_n} failed: {[c.name for c in cert.failures]}")
    return cert
