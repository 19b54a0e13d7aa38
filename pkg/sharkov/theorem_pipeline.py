"""
Finite-depth run of the construction that turns a non-wandering point with
first returns (R_n) into a point whose neighborhoods return at times (S_n).

Stages, in order:

    profile          delta schedule, witnesses y_n, perturbation plans g_n
    periodicity      y_n is R_n-periodic under g_n (the family, index by index)
    order-gate       R comes before S in the lifted Sharkovskii order
    second-periodic  a minimal period-S_n point z_n of each g_n
    accumulation     cluster point x1 of (z_n) and the subsequence (n_k)
    returns          W_k = (x1 - 1/n_k, x1 + 1/n_k) returns under f^(S_n_k)

Statements about hyperreal classes are checked index by index for n = 1..N.
A statement holds at depth N when every index in the terminal window (the
last ceil(N/2) indices) passes; failures before the window are recorded as
exclusions, which is all a cofinite reading can ask of a finite run.
"""

import json
import logging
import math
import statistics
import tomllib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd

from sharkov.certificates import Certificate
from sharkov.config import TAU_EQ, worker_count
from sharkov.continuity import DeltaSchedule, build_schedule, verify_lemma1
from sharkov.errors import (
    ConfigError,
    DisplacementTooLargeError,
    InvalidArgumentError,
    InvarianceError,
    NoDataError,
    NoReturnError,
    NoWitnessError,
    SharkovError,
)
from sharkov.hyper_core import HyperNumber, format_hyper, parse_hyper, require_hypernatural
from sharkov.orbit_analysis import ROOT_TOL, SEPARATION, closure_in_domain, find_periodic_points, proper_divisors
from sharkov.perturbation import PerturbationPlan, certify, find_witness, plan_from_witness, return_tolerance
from sharkov.pl_map import (
    Interval,
    PiecewiseLinearMap,
    compose,
    format_map,
    image_iter,
    iterate,
    iterate_map,
    load_map,
    sup_distance,
)
from sharkov.sharkovskii_order import OrderVerdict, StarVerdict, compare, star_compare

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
STAGES = ("profile", "periodicity", "order-gate", "second-periodic", "accumulation", "returns")
CLUSTER_GAP = 1e-6
COINCIDENCE_TOL = 1e-9
SEMIGROUP_MAX_STEPS = 6
SEMIGROUP_MAP_STEPS = 3

IndexSequence = Union[HyperNumber, Sequence[int]]


def term(seq: IndexSequence, n: int) -> int:
    """n-th entry (1-based) of a hypernatural or of a plain list."""
    if isinstance(seq, HyperNumber):
        return int(seq.entry(n))
    if not 1 <= n <= len(seq):
        raise InvalidArgumentError(f"Index {n} is outside a sequence of length {len(seq)}")
    return int(seq[n - 1])


@dataclass
class FamilyDynamics:
    """The family (g_n) at truncation depth N, acting index-wise on per-index states."""

    members: List[Tuple[int, PiecewiseLinearMap]]
    depth: int

    @cached_property
    def _by_index(self) -> Dict[int, PiecewiseLinearMap]:
        return dict(self.members)

    @property
    def indices(self) -> List[int]:
        return [n for n, _ in self.members]

    def member(self, n: int) -> PiecewiseLinearMap:
        try:
            return self._by_index[n]
        except KeyError:
            raise InvalidArgumentError(f"Index {n} is not a member of the family (depth {self.depth})")

    def step(self, states: Sequence[float]) -> List[float]:
        """One application of the class map: x_n -> g_n(x_n)."""
        return [g.evaluate(x) for (_, g), x in zip(self.members, states)]

    def evolve(self, times: Union[int, HyperNumber], states: Sequence[float]) -> List[float]:
        """The dynamical system: index n is iterated times_n times."""
        if isinstance(times, HyperNumber):
            require_hypernatural(times + HyperNumber.constant(1.0), "times")
        return [
            iterate(g, times if isinstance(times, int) else term(times, n), x)
            for (n, g), x in zip(self.members, states)
        ]

    def semigroup_check(
        self,
        points: Sequence[float],
        max_steps: int = SEMIGROUP_MAX_STEPS,
        map_steps: int = SEMIGROUP_MAP_STEPS,
    ) -> Certificate:
        """evolve(a + b) = evolve(b) o evolve(a).

        Checked three ways per member: pointwise and exactly for a, b <= max_steps,
        on the composed PL maps g^(a+b) against g^b o g^a for a, b <= map_steps,
        and once for the whole family at hypernatural times.
        """
        cert = Certificate(subject="family semigroup law")
        for n, g in self.members:
            try:
                violations = 0
                for a in range(max_steps + 1):
                    for b in range(max_steps + 1):
                        for x in points:
                            if iterate(g, a + b, x) != iterate(g, b, iterate(g, a, x)):
                                violations += 1
                cert.add(f"n={n}", violations == 0, residual=float(violations), detail=f"a, b <= {max_steps}")
            except InvarianceError as e:
                cert.add(f"n={n}", False, detail=str(e))

            try:
                powers = [iterate_map(g, 0)]
                for _ in range(2 * map_steps):
                    powers.append(compose(g, powers[-1]))
                worst = max(
                    sup_distance(powers[a + b], compose(powers[b], powers[a]))
                    for a in range(map_steps + 1)
                    for b in range(map_steps + 1)
                )
                cert.add(
                    f"n={n} maps",
                    worst <= return_tolerance(g, 2 * map_steps),
                    residual=worst,
                    detail=f"||g^(a+b) - g^b o g^a||, a, b <= {map_steps}",
                )
            except InvarianceError as e:
                cert.add(f"n={n} maps", False, detail=str(e))

        a_times = HyperNumber.periodic([1, 2, 3])
        b_times = HyperNumber.periodic([2, 0], prefix=[4])
        for x in points:
            try:
                joint = self.evolve(a_times + b_times, [x] * len(self.members))
                split = self.evolve(b_times, self.evolve(a_times, [x] * len(self.members)))
            except InvarianceError as e:
                cert.add(f"hypernatural x={x!r}", False, detail=str(e))
                continue
            mismatched = [n for n, u, v in zip(self.indices, joint, split) if u != v]
            cert.add(
                f"hypernatural x={x!r}",
                not mismatched,
                residual=float(len(mismatched)),
                detail=f"a = {format_hyper(a_times)}, b = {format_hyper(b_times)}",
            )
        return cert


@dataclass
class TruncatedStatement:
    """A per-index statement read cofinitely at depth N."""

    statement: str
    depth: int
    certificate: Certificate
    failing: List[int] = field(default_factory=list)

    @property
    def window_start(self) -> int:
        return self.depth - math.ceil(self.depth / 2) + 1

    @property
    def exclusions(self) -> List[int]:
        return [n for n in self.failing if n < self.window_start]

    @property
    def holds(self) -> bool:
        return all(n < self.window_start for n in self.failing)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "statement": self.statement,
            "depth": self.depth,
            "holds": self.holds,
            "window_start": self.window_start,
            "failing": list(self.failing),
            "exclusions": self.exclusions,
            "certificate": self.certificate.to_dict(),
        }


@dataclass
class IndexRecord:
    n: int
    delta_n: float
    neighborhood: Interval
    R: int
    S: int
    found_return: Optional[int] = None
    witness: Optional[float] = None
    witness_status: Optional[str] = None
    plan: Optional[PerturbationPlan] = None
    plan_certificate: Optional[Certificate] = None
    z: Optional[float] = None
    z_certificate: Optional[Certificate] = None
    flags: Dict[str, str] = field(default_factory=dict)

    def flag(self, code: str, detail: str) -> None:
        self.flags[code] = detail
        logger.info(f"n={self.n} flagged {code}: {detail}")

    @property
    def plan_ok(self) -> bool:
        return self.plan is not None and self.plan_certificate is not None and self.plan_certificate.passed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "delta_n": self.delta_n,
            "neighborhood": self.neighborhood.to_list(),
            "R_n": self.R,
            "S_n": self.S,
            "found_return": self.found_return,
            "witness": self.witness,
            "witness_status": self.witness_status,
            "plan": self.plan.to_dict() if self.plan else None,
            "plan_certificate": self.plan_certificate.to_dict() if self.plan_certificate else None,
            "z": self.z,
            "z_certificate": self.z_certificate.to_dict() if self.z_certificate else None,
            "flags": dict(self.flags),
        }


def assemble_family(
    f: PiecewiseLinearMap,
    x0: float,
    epsilon: float,
    R_seq: IndexSequence,
    S_seq: IndexSequence,
    depth: int,
    max_time: int,
) -> Tuple[FamilyDynamics, List[IndexRecord], DeltaSchedule]:
    """Build g_n for n = 1..depth. Flagged indices keep g_n = f and stay out of later stages."""
    for name, seq in (("R", R_seq), ("S", S_seq)):
        if not isinstance(seq, HyperNumber) and len(seq) < depth:
            raise InvalidArgumentError(f"{name} has {len(seq)} terms, depth {depth} needs at least {depth}")
    schedule = build_schedule(f, epsilon, [term(S_seq, n) for n in range(1, depth + 1)], depth)

    def assemble_index(n: int) -> Tuple[IndexRecord, PiecewiseLinearMap]:
        delta_n = schedule.delta_for(n)
        record = IndexRecord(
            n=n,
            delta_n=delta_n,
            neighborhood=Interval.around(x0, delta_n),
            R=term(R_seq, n),
            S=term(S_seq, n),
        )
        try:
            witness = find_witness(f, x0, delta_n, max_time)
        except NoReturnError as e:
            record.flag("no-return", str(e))
            return record, f
        except NoWitnessError as e:
            record.flag("no-witness", str(e))
            return record, f
        except InvarianceError as e:
            record.flag("invariance-escape", str(e))
            return record, f

        record.found_return = witness.return_time
        record.witness = witness.y
        record.witness_status = witness.status.value
        if witness.return_time != record.R:
            record.flag("first-return-mismatch", f"first return {witness.return_time} != R_n = {record.R}")
            return record, f

        try:
            plan = plan_from_witness(f, x0, delta_n, witness, index_n=n)
        except (DisplacementTooLargeError, InvarianceError) as e:
            record.flag("plan-failed", str(e))
            return record, f
        record.plan = plan
        record.plan_certificate = certify(plan, f)
        if not record.plan_certificate.passed:
            record.flag("plan-uncertified", ", ".join(c.name for c in record.plan_certificate.failures))
            return record, f
        return record, plan.perturbed

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(assemble_index, range(1, depth + 1)))

    records = [record for record, _ in results]
    family = FamilyDynamics(members=[(record.n, g) for record, g in results], depth=depth)
    return family, records, schedule


def periodic_under_family(
    family: FamilyDynamics,
    witnesses: Mapping[int, Optional[float]],
    R_seq: IndexSequence,
) -> TruncatedStatement:
    """y0 = [(y_n)] is periodic with period R = [(R_n)] under the family."""
    cert = Certificate(subject="y0 periodic under the family")
    failing = []
    for n, g in family.members:
        y = witnesses.get(n)
        R = term(R_seq, n)
        if y is None:
            cert.add(f"n={n}", False, detail="no witness")
            failing.append(n)
            continue
        try:
            closed = abs(iterate(g, R, y) - y)
            early = [ell for ell in range(1, R) if abs(iterate(g, ell, y) - y) <= TAU_EQ]
        except InvarianceError as e:
            cert.add(f"n={n}", False, detail=str(e))
            failing.append(n)
            continue
        passed = closed <= return_tolerance(g, R) and not early
        detail = f"|g^{R}(y) - y| = {closed!r}" + (f"; returns early at {early}" if early else "")
        cert.add(f"n={n}", passed, residual=closed, detail=detail)
        if not passed:
            failing.append(n)
    return TruncatedStatement(statement="y0 has period R under the family", depth=family.depth, certificate=cert, failing=failing)


def find_second_periodic(
    family: FamilyDynamics,
    S_seq: IndexSequence,
    R_seq: IndexSequence,
    grid: Optional[int] = None,
) -> List[Tuple[int, Optional[float], Certificate]]:
    """Per index, the smallest point of minimal period S_n under g_n.

    Existence is the classical theorem applied to g_n; a miss is a detection gap.
    """

    def search(member: Tuple[int, PiecewiseLinearMap]) -> Tuple[int, Optional[float], Certificate]:
        n, g = member
        R, S = term(R_seq, n), term(S_seq, n)
        cert = Certificate(subject=f"period-{S} point n={n}")
        if compare(R, S) is not OrderVerdict.BEFORE:
            cert.add("order-usable", False, detail=f"{R} does not come before {S}")
            return n, None, cert
        cert.add("order-usable", True, detail=f"{R} comes before {S}")

        try:
            orbits = find_periodic_points(g, S, grid)
        except InvarianceError as e:
            cert.add("invariant", False, detail=str(e))
            return n, None, cert
        if not orbits:
            cert.add("detected", False, detail="detection gap: no orbit found by the scan")
            return n, None, cert
        best = orbits[0]
        cert.add("detected", True, detail=f"{len(orbits)} orbit(s), mode {best.mode}")
        cert.add("residual", best.residual <= ROOT_TOL, residual=best.residual)
        separation = min((abs(iterate(g, d, best.point) - best.point) for d in proper_divisors(S)), default=math.inf)
        cert.add("minimal-period", separation > SEPARATION, residual=separation if math.isfinite(separation) else None)
        return n, best.point, cert

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(search, family.members))


@dataclass
class Accumulation:
    x1: float
    subsequence: List[int]
    cluster_sizes: List[int]

    def to_dict(self) -> Dict[str, Any]:
        return {"x1": self.x1, "subsequence": list(self.subsequence), "cluster_sizes": list(self.cluster_sizes)}


def extract_accumulation(z_list: Sequence[Tuple[int, float]]) -> Accumulation:
    """x1 = median of the densest single-linkage cluster (ties go to the smallest cluster position)."""
    if not z_list:
        raise NoDataError("No z_n values to accumulate")
    values = sorted(z for _, z in z_list)
    clusters = [[values[0]]]
    for value in values[1:]:
        if value - clusters[-1][-1] <= CLUSTER_GAP:
            clusters[-1].append(value)
        else:
            clusters.append([value])
    densest = max(clusters, key=len)
    x1 = statistics.median_low(densest)
    subsequence = sorted(n for n, z in z_list if abs(z - x1) < 1.0 / (2 * n))
    return Accumulation(x1=x1, subsequence=subsequence, cluster_sizes=[len(c) for c in clusters])


@dataclass
class ReturnCertificate:
    n: int
    S: int
    window: Interval
    image: Interval
    norm: float
    epsilon_k: float
    certificate: Certificate
    stability: Dict[str, Any]

    @property
    def passed(self) -> bool:
        return self.certificate.passed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "S_n": self.S,
            "window": self.window.to_list(),
            "image": self.image.to_list(),
            "norm": self.norm,
            "epsilon_k": self.epsilon_k,
            "passed": self.passed,
            "certificate": self.certificate.to_dict(),
            "stability": self.stability,
        }


def certify_returns(
    f: PiecewiseLinearMap,
    x1: float,
    subsequence: Sequence[int],
    S_seq: IndexSequence,
    family: FamilyDynamics,
    z_by_index: Optional[Mapping[int, float]] = None,
) -> List[ReturnCertificate]:
    """Certify that W_k = (x1 - 1/n_k, x1 + 1/n_k) returns to itself under f^(S_n_k).

    The norm bound ||g^S - f^S|| < 1/(2 n_k) is checked directly; the return
    itself is then confirmed by an exact interval image, since the norm only
    bounds how far z_n_k moves.
    """
    if not subsequence:
        raise NoDataError("Empty subsequence, nothing to certify")
    certificates = []
    for n in subsequence:
        S = term(S_seq, n)
        g = family.member(n)
        epsilon_k = 1.0 / (2 * n)
        cert = Certificate(subject=f"W_k return n={n}")

        norm = 0.0 if g is f else sup_distance(iterate_map(g, S), iterate_map(f, S))
        cert.add("norm-bound", norm < epsilon_k, residual=norm, detail=f"||g^{S} - f^{S}|| < {epsilon_k!r}")

        if z_by_index is not None and n in z_by_index:
            offset = abs(z_by_index[n] - x1)
            cert.add("z-in-half-window", offset < epsilon_k, residual=offset)

        window = Interval.around(x1, 1.0 / n)
        image = image_iter(f, S, closure_in_domain(f, window))
        meets = image.meets_open(window)
        gap = 0.0 if meets else max(window.lo - image.hi, image.lo - window.hi, 0.0)
        cert.add(
            "returns",
            meets,
            residual=gap,
            detail=f"f^{S}(W) = [{image.lo!r}, {image.hi!r}]" + ("" if meets else " misses W"),
        )

        stability = verify_lemma1(f, g, epsilon_k, S, n)
        certificates.append(
            ReturnCertificate(
                n=n,
                S=S,
                window=window,
                image=image,
                norm=norm,
                epsilon_k=epsilon_k,
                certificate=cert,
                stability=stability.to_dict(),
            )
        )
    return certificates


@dataclass
class StageResult:
    name: str
    passed: bool
    detail: str = ""
    exclusions: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "detail": self.detail, "exclusions": list(self.exclusions)}


@dataclass
class PipelineConfig:
    name: str
    map_path: Path
    x0: float
    epsilon: float
    R: HyperNumber
    S: HyperNumber
    depth: int
    max_time: int = 50
    grid: Optional[int] = None
    output: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "map": str(self.map_path),
            "x0": self.x0,
            "epsilon": self.epsilon,
            "R": format_hyper(self.R),
            "S": format_hyper(self.S),
            "depth": self.depth,
            "max_time": self.max_time,
            "grid": self.grid,
            "output": self.output,
        }


@dataclass
class PipelineReport:
    name: str
    inputs: Dict[str, Any]
    generated_at: str
    status: str = "incomplete"
    schedule: Optional[DeltaSchedule] = None
    records: List[IndexRecord] = field(default_factory=list)
    periodicity: Optional[TruncatedStatement] = None
    semigroup: Optional[Certificate] = None
    star_order_verdict: Optional[str] = None
    second_periodic: Optional[TruncatedStatement] = None
    accumulation: Optional[Accumulation] = None
    returns: List[ReturnCertificate] = field(default_factory=list)
    stages: List[StageResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def rejected_stage(self) -> Optional[str]:
        prefix = "rejected-at-"
        return self.status[len(prefix):] if self.status.startswith(prefix) else None

    @property
    def x1(self) -> Optional[float]:
        return self.accumulation.x1 if self.accumulation else None

    def add_stage(self, name: str, passed: bool, detail: str = "", exclusions: Sequence[int] = ()) -> bool:
        self.stages.append(StageResult(name=name, passed=passed, detail=detail, exclusions=list(exclusions)))
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, f"Stage {name}: {'pass' if passed else 'REJECTED'} {detail}")
        if not passed:
            self.status = f"rejected-at-{name}"
        return passed

    def to_dict(self, include_timestamp: bool = True) -> Dict[str, Any]:
        x0 = self.inputs.get("x0")
        data = {
            "report_version": REPORT_VERSION,
            "name": self.name,
            "status": self.status,
            "inputs": self.inputs,
            "delta_schedule": self.schedule.to_dict() if self.schedule else None,
            "records": [record.to_dict() for record in self.records],
            "periodicity": self.periodicity.to_dict() if self.periodicity else None,
            "semigroup": self.semigroup.to_dict() if self.semigroup else None,
            "star_order_verdict": self.star_order_verdict,
            "second_periodic": self.second_periodic.to_dict() if self.second_periodic else None,
            "accumulation": self.accumulation.to_dict() if self.accumulation else None,
            "x1_coincides_with_x0": (abs(self.x1 - x0) < COINCIDENCE_TOL) if self.x1 is not None else None,
            "returns": [r.to_dict() for r in self.returns],
            "returns_certified_as_first_returns": False,
            "stages": [stage.to_dict() for stage in self.stages],
        }
        if include_timestamp:
            data["generated_at"] = self.generated_at
        return data

    def to_json(self, include_timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(include_timestamp), indent=2)


def run(config: PipelineConfig) -> PipelineReport:
    """Execute every stage in order; the status names the first stage that rejects."""
    f = load_map(config.map_path)
    if not f.a <= config.x0 <= f.b:
        raise ConfigError(f"x0 = {config.x0} lies outside the map domain [{f.a}, {f.b}]")
    depth = config.depth

    inputs = config.to_dict()
    inputs["map_text"] = format_map(f)
    inputs["R_seq"] = [term(config.R, n) for n in range(1, depth + 1)]
    inputs["S_seq"] = [term(config.S, n) for n in range(1, depth + 1)]
    report = PipelineReport(name=config.name, inputs=inputs, generated_at=datetime.now(timezone.utc).isoformat())

    logger.info("=" * 80)
    logger.info(f"PIPELINE: {config.name}")
    logger.info("=" * 80)
    logger.info(f"Map: {config.map_path}")
    logger.info(f"x0 = {config.x0}, epsilon = {config.epsilon}, depth = {depth}, max_time = {config.max_time}")
    logger.info(f"R = {format_hyper(config.R)}, S = {format_hyper(config.S)}")
    logger.info("=" * 80)

    family, records, schedule = assemble_family(f, config.x0, config.epsilon, config.R, config.S, depth, config.max_time)
    report.schedule = schedule
    report.records = records
    profile = TruncatedStatement(
        statement="first return R_n with a certified perturbation plan",
        depth=depth,
        certificate=Certificate(subject="profile"),
        failing=[record.n for record in records if not record.plan_ok],
    )
    if not report.add_stage("profile", profile.holds, f"failing indices {profile.failing}", profile.exclusions):
        return report

    witnesses = {record.n: record.witness for record in records if record.plan_ok}
    report.periodicity = periodic_under_family(family, witnesses, config.R)
    report.semigroup = family.semigroup_check([config.x0] + sorted(set(witnesses.values())))
    if not report.semigroup.passed:
        logger.warning("Semigroup law violated at some index")
    if not report.add_stage(
        "periodicity",
        report.periodicity.holds,
        f"failing indices {report.periodicity.failing}",
        report.periodicity.exclusions,
    ):
        return report

    verdict = star_compare(config.R, config.S)
    report.star_order_verdict = verdict.value
    if not report.add_stage("order-gate", verdict is StarVerdict.HOLDS, f"R before S: {verdict.value}"):
        return report

    usable = FamilyDynamics(members=[(n, g) for n, g in family.members if n in witnesses], depth=depth)
    found = {n: (z, cert) for n, z, cert in find_second_periodic(usable, config.S, config.R, config.grid)}
    failing = []
    for record in records:
        if record.n not in found:
            failing.append(record.n)
            continue
        z, cert = found[record.n]
        record.z, record.z_certificate = z, cert
        if z is None or not cert.passed:
            failing.append(record.n)
            record.flag("second-periodic", ", ".join(c.detail or c.name for c in cert.failures) or "not found")
    second = Certificate(subject="z0 periodic with period S")
    for n, (z, cert) in sorted(found.items()):
        second.add(f"n={n}", z is not None and cert.passed, detail=f"z_n = {z!r}")
    report.second_periodic = TruncatedStatement(
        statement="z0 has period S under the family", depth=depth, certificate=second, failing=failing
    )
    if not report.add_stage(
        "second-periodic",
        report.second_periodic.holds,
        f"failing indices {failing}",
        report.second_periodic.exclusions,
    ):
        return report

    z_list = [(record.n, record.z) for record in records if record.z is not None and record.n not in failing]
    try:
        report.accumulation = extract_accumulation(z_list)
    except NoDataError as e:
        report.add_stage("accumulation", False, str(e))
        return report
    if not report.add_stage(
        "accumulation",
        bool(report.accumulation.subsequence),
        f"x1 = {report.accumulation.x1!r}, subsequence {report.accumulation.subsequence}",
    ):
        return report

    z_by_index = dict(z_list)
    try:
        report.returns = certify_returns(
            f, report.accumulation.x1, report.accumulation.subsequence, config.S, family, z_by_index
        )
    except InvarianceError as e:
        report.add_stage("returns", False, str(e))
        return report
    failed = [r.n for r in report.returns if not r.passed]
    if not report.add_stage("returns", not failed, f"failing n_k {failed}"):
        return report

    report.status = "pass"
    logger.info(f"Pipeline {config.name} passed: x1 = {report.accumulation.x1!r}")
    return report


def records_frame(data: Mapping[str, Any]) -> pd.DataFrame:
    """Per-index table from a report dict (a fresh report or a loaded JSON file)."""
    rows = []
    for record in data.get("records", []):
        plan = record.get("plan")
        plan_certificate = record.get("plan_certificate")
        rows.append(
            {
                "n": record["n"],
                "delta_n": record["delta_n"],
                "R_n": record["R_n"],
                "found_R": record.get("found_return"),
                "witness": record.get("witness"),
                "displacement": plan["displacement"] if plan else None,
                "plan_ok": bool(plan_certificate and plan_certificate["passed"]),
                "S_n": record["S_n"],
                "z_n": record.get("z"),
                "flags": ",".join(sorted(record.get("flags", {}))),
            }
        )
    return pd.DataFrame(rows, columns=["n", "delta_n", "R_n", "found_R", "witness", "displacement", "plan_ok", "S_n", "z_n", "flags"])


def stages_frame(data: Mapping[str, Any]) -> pd.DataFrame:
    return pd.DataFrame(data.get("stages", []), columns=["name", "passed", "detail", "exclusions"])


def format_report_text(report: PipelineReport) -> str:
    lines = []
    lines.append("=" * 80)
    lines.append(f"PIPELINE REPORT: {report.name}")
    lines.append("=" * 80)
    lines.append(f"Status: {report.status}")
    lines.append(f"Map: {report.inputs.get('map')}")
    lines.append(f"x0 = {report.inputs.get('x0')}, epsilon = {report.inputs.get('epsilon')}, depth = {report.inputs.get('depth')}")
    lines.append(f"R = {report.inputs.get('R')}")
    lines.append(f"S = {report.inputs.get('S')}")
    if report.schedule is not None:
        lines.append(f"Note: {report.schedule.note}")

    lines.append(f"\n{'-' * 80}")
    lines.append("STAGES")
    lines.append(f"{'-' * 80}")
    data = report.to_dict(include_timestamp=False)
    if report.stages:
        lines.append(stages_frame(data).to_string(index=False))

    if report.records:
        lines.append(f"\n{'-' * 80}")
        lines.append("PER-INDEX RECORDS")
        lines.append(f"{'-' * 80}")
        lines.append(records_frame(data).to_string(index=False))

    if report.star_order_verdict is not None:
        lines.append(f"\nLifted order R before S: {report.star_order_verdict}")

    if report.accumulation is not None:
        lines.append(f"\n{'-' * 80}")
        lines.append("ACCUMULATION")
        lines.append(f"{'-' * 80}")
        lines.append(f"x1 = {report.accumulation.x1!r}")
        lines.append(f"Subsequence n_k = {report.accumulation.subsequence}")
        x0 = report.inputs.get("x0")
        if x0 is not None and abs(report.accumulation.x1 - x0) < COINCIDENCE_TOL:
            lines.append("x1 coincides with x0 (allowed)")

    if report.returns:
        lines.append(f"\n{'-' * 80}")
        lines.append("RETURNING NEIGHBORHOODS (not certified as first returns)")
        lines.append(f"{'-' * 80}")
        for r in report.returns:
            lines.append(
                f"n={r.n}  S={r.S}  W=[{r.window.lo!r}, {r.window.hi!r}]  ||g^S - f^S||={r.norm!r}  "
                f"{'returns' if r.passed else 'FAILED: ' + ', '.join(c.name for c in r.certificate.failures)}"
            )

    lines.append(f"\n{'=' * 80}")
    return "\n".join(lines)


def save_report(report: PipelineReport, output_file: Union[str, Path]) -> Tuple[Path, Path]:
    """Write the JSON report and its text rendering next to it."""
    json_path = Path(output_file)
    txt_path = json_path.with_suffix(".txt")
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(report.to_json() + "\n", encoding="utf-8")
    txt_path.write_text(format_report_text(report) + "\n", encoding="utf-8")
    logger.info(f"Report saved to {json_path} and {txt_path}")
    return json_path, txt_path


REQUIRED_KEYS = ("map", "x0", "epsilon", "R", "S", "depth")
OPTIONAL_KEYS = ("name", "max_time", "grid", "output")


def read_config_file(config_file: Union[str, Path]) -> Dict[str, Any]:
    """Load a JSON or TOML configuration file."""
    path = Path(config_file)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".toml":
            raw = tomllib.loads(text)
        else:
            raw = json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Failed to parse config file {path}: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {path} must hold an object at the top level")
    if "pipeline" in raw and isinstance(raw["pipeline"], dict):
        raw = {**{k: v for k, v in raw.items() if k != "pipeline"}, **raw["pipeline"]}
    return raw


def scenario_names(raw: Mapping[str, Any]) -> List[str]:
    return [scenario.get("name", f"scenario-{i}") for i, scenario in enumerate(raw.get("pipeline_configurations", []), 1)]


def _as_hypernatural(value: Any, key: str) -> HyperNumber:
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be a hypernatural, got {value!r}")
    if isinstance(value, int):
        x = HyperNumber.constant(float(value))
    elif isinstance(value, str):
        x = parse_hyper(value)
    else:
        raise ConfigError(f"{key} must be an integer or hypernumber text, got {value!r}")
    require_hypernatural(x, key)
    return x


def _positive_int(value: Any, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{key} must be a positive integer, got {value!r}")
    return value


def build_config(values: Mapping[str, Any], base_dir: Union[str, Path] = ".") -> PipelineConfig:
    missing = [key for key in REQUIRED_KEYS if key not in values]
    if missing:
        raise ConfigError(f"Missing config key(s): {', '.join(missing)}")
    unknown = sorted(set(values) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS))
    if unknown:
        logger.warning(f"Ignoring unknown config key(s): {', '.join(unknown)}")

    map_path = Path(values["map"])
    if not map_path.is_absolute():
        map_path = Path(base_dir) / map_path
    if not map_path.is_file():
        raise ConfigError(f"Map file not found: {map_path}")

    try:
        x0 = float(values["x0"])
        epsilon = float(values["epsilon"])
        R = _as_hypernatural(values["R"], "R")
        S = _as_hypernatural(values["S"], "S")
    except (InvalidArgumentError, TypeError, ValueError) as e:
        raise ConfigError(str(e))
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")

    grid = values.get("grid")
    return PipelineConfig(
        name=str(values.get("name", "default")),
        map_path=map_path,
        x0=x0,
        epsilon=epsilon,
        R=R,
        S=S,
        depth=_positive_int(values["depth"], "depth"),
        max_time=_positive_int(values.get("max_time", 50), "max_time"),
        grid=_positive_int(grid, "grid") if grid is not None else None,
        output=values.get("output"),
    )


def load_config(
    config_file: Union[str, Path],
    scenario: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> PipelineConfig:
    """Resolve one configuration: CLI overrides > named scenario > file defaults."""
    raw = read_config_file(config_file)
    base_dir = Path(config_file).parent
    if "pipeline_configurations" in raw:
        values = dict(raw.get("defaults", {}))
        if scenario is not None:
            matching = [s for s in raw["pipeline_configurations"] if s.get("name") == scenario]
            if not matching:
                raise ConfigError(
                    f"Scenario '{scenario}' not found; available: {', '.join(scenario_names(raw))}"
                )
            values.update(matching[0])
    else:
        if scenario is not None:
            raise ConfigError(f"Config file {config_file} defines no scenarios")
        values = dict(raw)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values, base_dir)


def load_all_configs(config_file: Union[str, Path], overrides: Optional[Mapping[str, Any]] = None) -> List[PipelineConfig]:
    raw = read_config_file(config_file)
    names = scenario_names(raw)
    if not names:
        return [load_config(config_file, overrides=overrides)]
    return [load_config(config_file, scenario=name, overrides=overrides) for name in names]


def _slug(name: str) -> str:
    return name.lower().replace(" ", "_")


def run_scenarios(configs: Sequence[PipelineConfig], output_dir: Union[str, Path]) -> List[PipelineReport]:
    """Run each configuration, save its report, and write an aggregate index."""
    output_dir = Path(output_dir)
    logger.info(f"Running {len(configs)} scenario(s)...")
    reports = []
    index = []
    for config in configs:
        try:
            report = run(config)
        except SharkovError as e:
            logger.error(f"Error in scenario '{config.name}': {e}")
            index.append({"scenario": config.name, "status": f"error: {e}", "report": None})
            continue
        json_path, _ = save_report(report, output_dir / f"{_slug(config.name)}_report.json")
        reports.append(report)
        index.append({"scenario": config.name, "status": report.status, "report": json_path.name})
        logger.info("\n" + "=" * 80 + "\n")

    index_file = output_dir / "pipeline_index.json"
    index_file.parent.mkdir(parents=True, exist_ok=True)
    index_file.write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    logger.info(f"Index saved to: {index_file}")
    return reports
