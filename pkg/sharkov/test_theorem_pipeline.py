import json
from pathlib import Path

import pytest

from sharkov.certificates import Certificate
from sharkov.errors import ConfigError, InvalidArgumentError, NoDataError
from sharkov.hyper_core import HyperNumber, parse_hyper
from sharkov.pl_map import PiecewiseLinearMap
from sharkov.theorem_pipeline import (
    FamilyDynamics,
    PipelineConfig,
    TruncatedStatement,
    assemble_family,
    certify_returns,
    extract_accumulation,
    find_second_periodic,
    load_all_configs,
    load_config,
    periodic_under_family,
    read_config_file,
    records_frame,
    run,
    run_scenarios,
    save_report,
    scenario_names,
    stages_frame,
    term,
)

PERIOD_THREE = 0.2857142857142857
SHIPPED_CONFIG = Path(__file__).parent / "pipeline_config.json"
# agrees with the tent map on [0, 0.9] and leaves [0, 1] near 1
LEAKY_MAP_TEXT = "domain 0 1\nnodes 0 0.5 0.9 1\nvalues 0 1 0.2 1.2\n"


def make_config(tent_file, **values):
    settings = {
        "name": "tent",
        "map_path": tent_file,
        "x0": PERIOD_THREE,
        "epsilon": 0.5,
        "R": HyperNumber.constant(3),
        "S": HyperNumber.constant(5),
        "depth": 8,
        "max_time": 20,
    }
    settings.update(values)
    return PipelineConfig(**settings)


def write_json_config(tmp_path, data):
    path = tmp_path / "pipeline.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_term_reads_hypernaturals_and_lists():
    assert term(parse_hyper("prefix=[1];cycle=[5,6]"), 1) == 1
    assert term(parse_hyper("prefix=[1];cycle=[5,6]"), 2) == 5
    assert term(parse_hyper("prefix=[1];cycle=[5,6]"), 3) == 6
    assert term([4, 7], 2) == 7
    with pytest.raises(InvalidArgumentError):
        term([4, 7], 3)


def test_assemble_family_needs_enough_terms(tent_map):
    with pytest.raises(InvalidArgumentError, match="depth 4"):
        assemble_family(tent_map, PERIOD_THREE, 0.5, [3, 3, 3, 3], [5, 5], 4, 20)


def test_family_dynamics(tent_map, identity_map):
    family = FamilyDynamics(members=[(1, tent_map), (2, identity_map)], depth=2)
    assert family.indices == [1, 2]
    assert family.member(2) is identity_map
    with pytest.raises(InvalidArgumentError):
        family.member(3)
    assert family.step([0.25, 0.25]) == pytest.approx([0.5, 0.25])
    assert family.evolve(2, [0.25, 0.25]) == pytest.approx([1.0, 0.25])
    assert family.evolve(HyperNumber.periodic([1, 3]), [0.25, 0.25]) == pytest.approx([0.5, 0.25])
    cert = family.semigroup_check([0.1, PERIOD_THREE])
    assert cert.passed
    assert cert.get("n=1 maps").residual == 0.0
    assert cert.get(f"hypernatural x={PERIOD_THREE!r}").passed


def test_semigroup_check_compares_composed_maps():
    leaky = PiecewiseLinearMap((0.0, 0.5, 0.9, 1.0), (0.0, 1.0, 0.2, 1.2))
    family = FamilyDynamics(members=[(1, leaky)], depth=1)
    cert = family.semigroup_check([0.1, PERIOD_THREE])
    # both orbits stay on the tent part, so only the map-level check sees the escape
    assert cert.get("n=1").passed
    assert not cert.get("n=1 maps").passed
    assert "leaves" in cert.get("n=1 maps").detail


def test_truncated_statement_window():
    cert = Certificate(subject="window")
    early = TruncatedStatement(statement="sample", depth=8, certificate=cert, failing=[1])
    assert early.window_start == 5
    assert early.holds
    assert early.exclusions == [1]

    late = TruncatedStatement(statement="sample", depth=8, certificate=cert, failing=[2, 6])
    assert not late.holds
    assert late.exclusions == [2]
    assert late.to_dict()["window_start"] == 5


def test_assemble_family_on_a_periodic_point(tent_map):
    family, records, schedule = assemble_family(
        tent_map, PERIOD_THREE, 0.5, HyperNumber.constant(3), HyperNumber.constant(5), 8, 20
    )
    assert [entry.delta for entry in schedule.per_index] == [0.0009765625] * 8
    assert len(records) == 8
    for record, (n, g) in zip(records, family.members):
        assert record.n == n
        assert record.plan_ok
        assert record.plan.degenerate
        assert g is tent_map
        assert record.witness == PERIOD_THREE
        assert record.flags == {}


def test_assemble_family_moves_a_nearby_witness(tent_map):
    x0 = 2 / 7 + 0.0003
    family, records, _ = assemble_family(tent_map, x0, 0.5, HyperNumber.constant(3), HyperNumber.constant(5), 3, 20)
    for record, (_, g) in zip(records, family.members):
        assert record.plan_ok
        assert not record.plan.degenerate
        assert record.plan.displacement == pytest.approx(-1.923e-4, abs=1e-6)
        assert g is not tent_map


def test_assemble_family_flags_a_return_mismatch(tent_map):
    _, records, _ = assemble_family(tent_map, PERIOD_THREE, 0.5, HyperNumber.constant(4), HyperNumber.constant(5), 2, 20)
    assert all("first-return-mismatch" in record.flags for record in records)
    assert not any(record.plan_ok for record in records)


def test_periodic_under_family(tent_map):
    family = FamilyDynamics(members=[(1, tent_map), (2, tent_map)], depth=2)
    good = periodic_under_family(family, {1: PERIOD_THREE, 2: PERIOD_THREE}, [3, 3])
    assert good.holds
    assert good.failing == []

    tampered = periodic_under_family(family, {1: PERIOD_THREE, 2: 0.3}, [3, 3])
    assert tampered.failing == [2]
    assert tampered.certificate.get("n=2").residual == pytest.approx(0.1)

    fixed = periodic_under_family(family, {1: 2 / 3, 2: None}, [3, 3])
    assert fixed.failing == [1, 2]
    assert "returns early" in fixed.certificate.get("n=1").detail


def test_find_second_periodic(tent_map):
    family = FamilyDynamics(members=[(1, tent_map)], depth=1)
    [(n, z, cert)] = find_second_periodic(family, [5], [3])
    assert n == 1
    assert z == pytest.approx(2 / 33, abs=1e-12)
    assert cert.passed

    [(_, z, cert)] = find_second_periodic(family, [2], [3])
    assert z == pytest.approx(0.4, abs=1e-12)
    assert cert.passed

    [(_, z, cert)] = find_second_periodic(family, [3], [3])
    assert z is None
    assert not cert.get("order-usable").passed


def test_extract_accumulation():
    constant_run = extract_accumulation([(1, 0.4), (2, 0.4), (3, 0.4)])
    assert constant_run.x1 == 0.4
    assert constant_run.subsequence == [1, 2, 3]

    alternating = extract_accumulation([(1, 0.2), (2, 0.7), (3, 0.2), (4, 0.7)])
    assert alternating.x1 == 0.2
    assert alternating.subsequence == [1, 3]
    assert alternating.cluster_sizes == [2, 2]

    single = extract_accumulation([(1, 0.7)])
    assert (single.x1, single.subsequence) == (0.7, [1])

    with pytest.raises(NoDataError):
        extract_accumulation([])


def test_certify_returns_on_the_period_five_orbit(tent_map):
    family = FamilyDynamics(members=[(n, tent_map) for n in range(1, 5)], depth=4)
    results = certify_returns(tent_map, 2 / 33, [1, 2, 3, 4], HyperNumber.constant(5), family)
    assert [r.n for r in results] == [1, 2, 3, 4]
    assert all(r.passed for r in results)
    assert all(r.norm == 0.0 for r in results)
    assert results[3].window.to_list() == pytest.approx([2 / 33 - 0.25, 2 / 33 + 0.25])


def test_certify_returns_rejects_a_window_that_does_not_return(tent_map):
    family = FamilyDynamics(members=[(1000, tent_map)], depth=1000)
    [result] = certify_returns(tent_map, 2 / 33 + 0.05, [1000], HyperNumber.constant(5), family)
    assert not result.passed
    assert not result.certificate.get("returns").passed
    assert result.certificate.get("norm-bound").passed
    assert result.image.to_list() == pytest.approx([0.4288, 0.4928], abs=1e-3)


def test_certify_returns_needs_a_subsequence(tent_map):
    family = FamilyDynamics(members=[(1, tent_map)], depth=1)
    with pytest.raises(NoDataError):
        certify_returns(tent_map, 0.1, [], [5], family)


def test_run_passes_on_the_tent_map(tent_file):
    report = run(make_config(tent_file))
    assert report.passed
    assert report.x1 == pytest.approx(2 / 33, abs=1e-9)
    assert report.accumulation.subsequence == list(range(1, 9))
    assert [stage.name for stage in report.stages] == [
        "profile",
        "periodicity",
        "order-gate",
        "second-periodic",
        "accumulation",
        "returns",
    ]
    assert report.star_order_verdict == "holds"
    assert report.semigroup.passed
    data = report.to_dict()
    assert data["x1_coincides_with_x0"] is False
    assert data["returns_certified_as_first_returns"] is False
    assert list(stages_frame(data)["passed"]) == [True] * 6
    assert list(records_frame(data)["z_n"]) == pytest.approx([2 / 33] * 8, abs=1e-9)


def test_run_with_a_nearby_non_periodic_point(tent_file):
    report = run(make_config(tent_file, x0=2 / 7 + 0.0003, depth=4))
    assert report.passed
    assert report.x1 == pytest.approx(2 / 33, abs=1e-9)
    assert all(not record.plan.degenerate for record in report.records)


def test_run_with_period_two_target(tent_file):
    report = run(make_config(tent_file, S=HyperNumber.constant(2), depth=4))
    assert report.passed
    assert report.x1 == pytest.approx(0.4, abs=1e-9)


def test_run_with_alternating_targets(tent_file):
    report = run(make_config(tent_file, S=parse_hyper("prefix=[];cycle=[5,6]")))
    assert report.passed
    assert report.x1 == pytest.approx(2 / 65, abs=1e-9)
    assert report.accumulation.cluster_sizes == [4, 4]


def test_run_rejects_equal_periods_at_the_order_gate(tent_file):
    report = run(make_config(tent_file, S=HyperNumber.constant(3)))
    assert report.status == "rejected-at-order-gate"
    assert report.rejected_stage == "order-gate"
    assert report.star_order_verdict == "fails"
    assert report.accumulation is None


def test_run_rejects_a_short_return_budget(tent_file):
    report = run(make_config(tent_file, max_time=2))
    assert report.status == "rejected-at-profile"
    assert all("no-return" in record.flags for record in report.records)


def test_run_keeps_the_report_when_a_later_stage_leaves_the_domain(tmp_path):
    path = tmp_path / "leaky.map"
    path.write_text(LEAKY_MAP_TEXT, encoding="utf-8")
    report = run(make_config(path, depth=4))
    assert [stage.name for stage in report.stages] == ["profile", "periodicity", "order-gate", "second-periodic"]
    assert report.status == "rejected-at-second-periodic"
    searched = [record for record in report.records if record.plan_ok]
    assert searched
    assert all("leaves" in record.flags["second-periodic"] for record in searched)
    assert json.loads(report.to_json(include_timestamp=False))["status"] == "rejected-at-second-periodic"


def test_run_rejects_x0_outside_the_domain(tent_file):
    with pytest.raises(ConfigError):
        run(make_config(tent_file, x0=1.5))


def test_run_is_deterministic(tent_file):
    first = run(make_config(tent_file, depth=4)).to_json(include_timestamp=False)
    second = run(make_config(tent_file, depth=4)).to_json(include_timestamp=False)
    assert first == second
    assert "generated_at" not in json.loads(first)


def test_run_matches_the_golden_report(tent_file, monkeypatch):
    monkeypatch.chdir(tent_file.parent)
    report = run(make_config(Path(tent_file.name), depth=2))
    golden = Path(__file__).parent / "golden" / "tent_pipeline_depth2.json"
    assert report.to_json(include_timestamp=False) + "\n" == golden.read_text(encoding="utf-8")


def test_load_json_config(tmp_path, tent_file):
    path = write_json_config(
        tmp_path,
        {
            "defaults": {"map": "tent.map", "x0": PERIOD_THREE, "epsilon": 0.5, "R": 3, "S": "5", "depth": 8},
            "pipeline_configurations": [
                {"name": "base"},
                {"name": "short", "depth": 2, "S": "prefix=[];cycle=[5,6]"},
            ],
        },
    )
    assert scenario_names(read_config_file(path)) == ["base", "short"]

    config = load_config(path, scenario="short")
    assert config.map_path == tent_file
    assert config.depth == 2
    assert term(config.S, 2) == 6

    overridden = load_config(path, scenario="base", overrides={"depth": 3, "x0": None})
    assert overridden.depth == 3
    assert overridden.x0 == PERIOD_THREE

    with pytest.raises(ConfigError):
        load_config(path, scenario="missing")


def test_load_toml_config(tmp_path, tent_file):
    path = tmp_path / "pipeline.toml"
    path.write_text(
        'name = "toml"\nmap = "tent.map"\nx0 = 0.2857142857142857\nepsilon = 0.5\nR = 3\nS = 5\ndepth = 4\n',
        encoding="utf-8",
    )
    config = load_config(path)
    assert config.name == "toml"
    assert term(config.R, 1) == 3
    assert config.max_time == 50


@pytest.mark.parametrize(
    "values",
    [
        {"map": "absent.map", "x0": 0.3, "epsilon": 0.5, "R": 3, "S": 5, "depth": 4},
        {"map": "tent.map", "x0": 0.3, "epsilon": 0.5, "R": 3, "depth": 4},
        {"map": "tent.map", "x0": 0.3, "epsilon": 0.0, "R": 3, "S": 5, "depth": 4},
        {"map": "tent.map", "x0": 0.3, "epsilon": 0.5, "R": 3, "S": "2.5", "depth": 4},
        {"map": "tent.map", "x0": 0.3, "epsilon": 0.5, "R": 3, "S": 5, "depth": 0},
    ],
)
def test_bad_configs(tmp_path, tent_file, values):
    path = write_json_config(tmp_path, values)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "nothing.json")


def test_shipped_scenarios_load():
    configs = load_all_configs(SHIPPED_CONFIG)
    assert [c.name for c in configs] == scenario_names(read_config_file(SHIPPED_CONFIG))
    assert all(c.map_path.is_file() for c in configs)


def test_save_report(tmp_path, tent_file):
    report = run(make_config(tent_file, depth=2))
    json_path, txt_path = save_report(report, tmp_path / "out" / "tent_report.json")
    data = json.loads(json_path.read_text(encoding="utf-8"))
    assert data["status"] == "pass"
    assert "generated_at" in data
    text = txt_path.read_text(encoding="utf-8")
    assert "PIPELINE REPORT: tent" in text
    assert "not certified as first returns" in text


def test_run_scenarios_writes_an_index(tmp_path, tent_file):
    configs = [
        make_config(tent_file, name="Tent ok", depth=2),
        make_config(tent_file, name="Tent equal", depth=2, S=HyperNumber.constant(3)),
    ]
    reports = run_scenarios(configs, tmp_path / "reports")
    assert [r.status for r in reports] == ["pass", "rejected-at-order-gate"]
    index = json.loads((tmp_path / "reports" / "pipeline_index.json").read_text(encoding="utf-8"))
    assert index == [
        {"scenario": "Tent ok", "status": "pass", "report": "tent_ok_report.json"},
        {"scenario": "Tent equal", "status": "rejected-at-order-gate", "report": "tent_equal_report.json"},
    ]
