"""
Perturbation budgets that keep S-fold iteration epsilon-stable.

delta(eps, S, n) is the MINIMUM of {1/n, eps/2, eta(eps)/2, ..., eta^(S-1)(eps)/2}.
Reading it as a maximum breaks delta <= 1/n, and the stability argument needs
||f - g|| < delta to imply both ||f - g|| < eps/2 and ||f - g|| < eta(eps).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from sharkov.errors import InvalidArgumentError, ScheduleUnderflowError
from sharkov.pl_map import (
    PiecewiseLinearMap,
    compose,
    lipschitz_constant,
    modulus_of_continuity,
    random_map,
    sup_distance,
)

logger = logging.getLogger(__name__)

UNDERFLOW_FLOOR = 1e-300

MIN_RESOLUTION_NOTE = (
    "delta is the minimum of {1/n, eps/2, eta(eps)/2, ...}; a maximum would violate "
    "delta <= 1/n and the iterate stability bound"
)


@dataclass(frozen=True)
class DeltaEntry:
    n: int
    S: int
    delta: float

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "S": self.S, "delta": self.delta}


@dataclass
class DeltaSchedule:
    epsilon: float
    eta_iterates: List[float]
    per_index: List[DeltaEntry] = field(default_factory=list)
    note: str = MIN_RESOLUTION_NOTE

    def delta_for(self, n: int) -> float:
        for entry in self.per_index:
            if entry.n == n:
                return entry.delta
        raise KeyError(n)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "eta_iterates": list(self.eta_iterates),
            "per_index": [entry.to_dict() for entry in self.per_index],
            "note": self.note,
        }


def _require_positive_int(value: int, name: str) -> None:
    if int(value) != value or value < 1:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")


def eta_iterates(f: PiecewiseLinearMap, epsilon: float, count: int) -> List[float]:
    """[eps, eta(eps), eta(eta(eps)), ...] with `count` members."""
    if not epsilon > 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    iterates = [float(epsilon)]
    while True:
        if iterates[-1] < UNDERFLOW_FLOOR:
            raise ScheduleUnderflowError(f"eta iterate {len(iterates) - 1} = {iterates[-1]!r} fell below {UNDERFLOW_FLOOR}")
        if len(iterates) >= count:
            return iterates[:count]
        iterates.append(modulus_of_continuity(f, iterates[-1]))


def eta_closed_form(lipschitz: float, epsilon: float, j: int) -> float:
    """eta^(j)(eps) for the PL modulus eta(tau) = tau / (2L), or tau / 2 when L = 0."""
    ratio = 2.0 if lipschitz == 0.0 else 2.0 * lipschitz
    return epsilon / ratio ** j


def delta(f: PiecewiseLinearMap, epsilon: float, S: int, n: int) -> float:
    _require_positive_int(S, "S")
    _require_positive_int(n, "n")
    iterates = eta_iterates(f, epsilon, S)
    return min([1.0 / n] + [value / 2 for value in iterates])


def build_schedule(f: PiecewiseLinearMap, epsilon: float, S_seq: Sequence[int], depth: int) -> DeltaSchedule:
    """Per-index budgets for n = 1..depth, cross-checking eta against its closed form."""
    if len(S_seq) < depth:
        raise InvalidArgumentError(f"Need {depth} S values, got {len(S_seq)}")
    longest = max(int(s) for s in S_seq[:depth])
    iterates = eta_iterates(f, epsilon, longest)

    lipschitz = lipschitz_constant(f)
    for j, value in enumerate(iterates):
        expected = eta_closed_form(lipschitz, epsilon, j)
        if not math.isclose(value, expected, rel_tol=1e-9):
            logger.warning(f"eta iterate {j}: iterative {value!r} vs closed form {expected!r}")

    schedule = DeltaSchedule(epsilon=float(epsilon), eta_iterates=iterates)
    for n in range(1, depth + 1):
        S = int(S_seq[n - 1])
        value = min([1.0 / n] + [v / 2 for v in iterates[:S]])
        schedule.per_index.append(DeltaEntry(n=n, S=S, delta=value))
    logger.info(f"Delta schedule built for depth {depth}: {MIN_RESOLUTION_NOTE}")
    return schedule


@dataclass
class StabilityCertificate:
    status: str
    holds: bool
    worst_k: int
    worst_norm: float
    distance: float
    delta: float
    epsilon: float
    norms: List[float] = field(default_factory=list)

    @property
    def precondition_failed(self) -> bool:
        return self.status == "precondition-failure"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "holds": self.holds,
            "worst_k": self.worst_k,
            "worst_norm": self.worst_norm,
            "distance": self.distance,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "norms": list(self.norms),
        }


def iterate_norms(f: PiecewiseLinearMap, g: PiecewiseLinearMap, S: int) -> List[float]:
    """||f^k - g^k|| for k = 1..S, computed on exact PL compositions."""
    norms = []
    f_k, g_k = f, g
    for k in range(1, S + 1):
        if k > 1:
            f_k = compose(f, f_k)
            g_k = compose(g, g_k)
        norms.append(sup_distance(f_k, g_k))
    return norms


def verify_lemma1(f: PiecewiseLinearMap, g: PiecewiseLinearMap, epsilon: float, S: int, n: int) -> StabilityCertificate:
    """Check ||f^k - g^k|| < eps for k <= S whenever ||f - g|| < delta(eps, S, n)."""
    budget = delta(f, epsilon, S, n)
    distance = sup_distance(f, g)
    if not distance < budget:
        logger.info(f"Stability precondition fails: ||f - g|| = {distance!r} >= delta = {budget!r}")
        return StabilityCertificate(
            status="precondition-failure",
            holds=False,
            worst_k=0,
            worst_norm=distance,
            distance=distance,
            delta=budget,
            epsilon=epsilon,
        )

    norms = iterate_norms(f, g, S)
    worst_index = max(range(len(norms)), key=lambda i: norms[i])
    holds = all(norm < epsilon for norm in norms)
    if not holds:
        logger.warning(f"Iterate-stability bound violated: ||f^{worst_index + 1} - g^{worst_index + 1}|| = {norms[worst_index]!r}")
    return StabilityCertificate(
        status="pass" if holds else "fail",
        holds=holds,
        worst_k=worst_index + 1,
        worst_norm=norms[worst_index],
        distance=distance,
        delta=budget,
        epsilon=epsilon,
        norms=norms,
    )


def random_stability_instance(
    rng: np.random.Generator,
    max_S: int = 8,
    max_n: int = 50,
    segments: int = 3,
) -> Tuple[PiecewiseLinearMap, PiecewiseLinearMap, float, int, int]:
    """(f, g, eps, S, n) with ||f - g|| < delta(eps, S, n) and both maps self-maps of [0, 1]."""
    epsilon = float(rng.uniform(0.01, 0.1))
    S = int(rng.integers(1, max_S + 1))
    n = int(rng.integers(1, max_n + 1))
    f = random_map(rng, segments=segments, low=0.1, high=0.9)
    budget = delta(f, epsilon, S, n)
    offsets = rng.uniform(-0.9 * budget, 0.9 * budget, size=len(f.nodes))
    g = PiecewiseLinearMap(f.nodes, tuple(y + float(d) for y, d in zip(f.values, offsets)))
    return f, g, epsilon, S, n


def stability_harness(trials: int, seed: int, max_S: int = 8, max_n: int = 50) -> List[StabilityCertificate]:
    rng = np.random.default_rng(seed)
    results = []
    for trial in range(trials):
        f, g, epsilon, S, n = random_stability_instance(rng, max_S=max_S, max_n=max_n)
        result = verify_lemma1(f, g, epsilon, S, n)
        logger.debug(f"trial {trial}: S={S}, n={n}, status={result.status}, worst={result.worst_norm!r}")
        results.append(result)
    violations = sum(1 for r in results if r.status == "fail")
    logger.info(f"Stability harness: {trials} trials, {violations} violation(s)")
    return results
