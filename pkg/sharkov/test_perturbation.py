from dataclasses import replace

import numpy as np
import pytest

from sharkov.errors import (
    DisplacementTooLargeError,
    InvalidArgumentError,
    InvarianceError,
    NoReturnError,
    NoWitnessError,
)
from sharkov.perturbation import (
    WitnessStatus,
    build_perturbation,
    bump,
    certify,
    find_witness,
    plan_from_witness,
)
from sharkov.pl_map import Interval, PiecewiseLinearMap, iterate, maps_equal, random_map, sup_distance


@pytest.fixture
def worked_plan(tent_map):
    return build_perturbation(tent_map, 0.28, 0.05, 0.28, 3)


def test_witness_is_x0_when_its_return_is_close(tent_map):
    witness = find_witness(tent_map, 0.28, 0.05, 10)
    y, R = witness
    assert (y, R) == (0.28, 3)
    assert witness.status is WitnessStatus.STRONG
    assert iterate(tent_map, 3, y) == pytest.approx(0.24)


def test_witness_for_a_periodic_point(tent_map):
    witness = find_witness(tent_map, 2 / 7, 0.02, 10)
    assert witness.return_time == 3
    assert witness.y == 2 / 7
    assert abs(witness.displacement) < 1e-12


def test_witness_for_identity(identity_map):
    witness = find_witness(identity_map, 0.6, 0.1, 5)
    assert (witness.y, witness.return_time) == (0.6, 1)


def test_witness_searches_the_neighborhood(tent_map):
    x0 = 2 / 7 + 0.0003
    delta_n = 0.0009765625
    witness = find_witness(tent_map, x0, delta_n, 20)
    assert witness.return_time == 3
    assert witness.status is WitnessStatus.STRONG
    # midpoint of the strong component: f^3 lands in V and |f^3(y) - y| < delta
    lo, hi = (0.0003 - delta_n) / 8, delta_n / 7
    assert witness.y == pytest.approx(2 / 7 + (lo + hi) / 2, abs=1e-9)
    assert abs(witness.displacement) < delta_n


def test_no_return_within_budget(tent_map):
    with pytest.raises(NoReturnError):
        find_witness(tent_map, 2 / 7, 0.001, 2)


def test_worked_example_geometry(worked_plan):
    assert worked_plan.neighborhood.to_list() == pytest.approx([0.23, 0.33])
    assert worked_plan.inner.to_list() == pytest.approx([0.24, 0.28])
    assert worked_plan.zeta == pytest.approx(0.005)
    assert worked_plan.outer.to_list() == pytest.approx([0.235, 0.285])
    assert worked_plan.displacement == pytest.approx(0.04)
    assert not worked_plan.degenerate


def test_worked_example_closes_the_orbit(tent_map, worked_plan):
    g = worked_plan.perturbed
    assert iterate(g, 3, 0.28) == pytest.approx(0.28, abs=1e-12)
    assert iterate(g, 1, 0.28) == pytest.approx(0.56)
    assert iterate(g, 2, 0.28) == pytest.approx(0.88)
    assert sup_distance(tent_map, g) == pytest.approx(0.04)


def test_worked_example_certifies(tent_map, worked_plan):
    cert = certify(worked_plan, tent_map)
    assert cert.passed, [c.to_dict() for c in cert.failures]
    assert cert.get("a:periodic-return").residual <= 1e-12


def test_tampered_bump_fails_the_return_check(tent_map, worked_plan):
    phi = worked_plan.phi
    tampered = replace(worked_plan, phi=PiecewiseLinearMap(phi.nodes, tuple(0.9 * v for v in phi.values)))
    cert = certify(tampered, tent_map)
    check = cert.get("a:periodic-return")
    assert not check.passed
    assert check.residual == pytest.approx(0.004, abs=1e-9)


def test_degenerate_plan_keeps_the_map(tent_map):
    plan = build_perturbation(tent_map, 2 / 7, 0.01, 2 / 7, 3)
    assert plan.degenerate
    assert plan.perturbed is tent_map
    assert maps_equal(plan.translation, PiecewiseLinearMap((0.0, 1.0), (0.0, 1.0)))
    assert certify(plan, tent_map).passed


def test_displacement_must_stay_below_delta(tent_map):
    with pytest.raises(DisplacementTooLargeError):
        build_perturbation(tent_map, 0.26, 0.035, 0.28, 3)


def test_witness_and_return_must_lie_in_the_neighborhood(tent_map):
    with pytest.raises(InvalidArgumentError):
        build_perturbation(tent_map, 0.28, 0.02, 0.28, 3)


def test_bump_shape():
    phi = bump(Interval(0.4, 0.5), Interval(0.3, 0.6), 0.0, 1.0)
    assert phi.nodes == (0.0, 0.3, 0.4, 0.5, 0.6, 1.0)
    assert phi.values == (0.0, 0.0, 1.0, 1.0, 0.0, 0.0)
    assert phi(0.35) == pytest.approx(0.5)


def test_to_dict_carries_the_perturbed_map(worked_plan):
    data = worked_plan.to_dict()
    assert data["witness_status"] == "strong"
    assert data["perturbed"].startswith("domain 0 1\nnodes ")
    assert data["inner"] == pytest.approx([0.24, 0.28])


def test_random_instances_certify(rng):
    certified = 0
    for _ in range(100):
        f = random_map(rng, segments=3)
        x0 = float(rng.uniform(0.1, 0.9))
        delta_n = float(rng.uniform(0.02, 0.1))
        try:
            witness = find_witness(f, x0, delta_n, 20)
            plan = plan_from_witness(f, x0, delta_n, witness)
            cert = certify(plan, f)
        except (NoReturnError, NoWitnessError, InvarianceError, DisplacementTooLargeError):
            continue
        for name in ("a:periodic-return", "b:orbit-matches-before-return", "c:sup-distance", "d:agrees-outside-preimage"):
            assert cert.get(name).passed, (x0, delta_n, cert.get(name).to_dict())
        certified += 1
    assert certified > 0


def test_agreement_outside_the_preimage(tent_map, worked_plan):
    g = worked_plan.perturbed
    xs = np.linspace(0.0, 1.0, 101)
    f_vals, g_vals = tent_map.evaluate_many(xs), g.evaluate_many(xs)
    outside = (f_vals < 0.235) | (f_vals > 0.285)
    assert np.allclose(f_vals[outside], g_vals[outside], atol=1e-12)
