"""Acceptance criteria, one test each; the terminal summary prints PASS/FAIL per criterion."""
from __future__ import annotations

import itertools
import json
import time
from decimal import Decimal
from pathlib import Path

import pytest
from hypothesis import HealthCheck, Phase, given, settings

from oracles import apply_patch
from published_fixture import published_records
from sb3repair import aggregate as A
from sb3repair import patch as P
from sb3repair.accounting import stub_energy_wh
from sb3repair.controller import ControllerConfig, ScheduleSignal, decide_plan
from sb3repair.corpus import archive_fixtures, build_fixture, case_specs, write_case
from sb3repair.gateway import ModelEndpoint, ScriptedTransport
from sb3repair.matrix import RunMatrixSpec, run_matrix, validate_spec
from sb3repair.project import ProjectDocument, load_archive, repack
from sb3repair.runner import LAYERS, load_case, run_trajectory, stable_view
from sb3repair.vm.verifier import RunSchedule, TestSuite, derive_seeds, full_verify, probe
from strategies import doc_and_patch

_MATRIX: dict[str, list[dict]] = {}


def _matrix_records(corpus_root: Path, tmp: Path) -> list[dict]:
    if "records" not in _MATRIX:
        spec = RunMatrixSpec.from_json(json.loads((corpus_root / "matrix.json").read_text()), base_dir=corpus_root)
        spec.output_dir = tmp
        _MATRIX["records"] = run_matrix(spec).records
    return _MATRIX["records"]


@pytest.mark.criterion(1, "RFC 6902 oracle equivalence on >= 1000 pairs")
def test_criterion_1_oracle_equivalence():
    seen = {"n": 0, "errors": set()}

    @settings(max_examples=1000, deadline=None, derandomize=True, database=None, phases=[Phase.generate],
              suppress_health_check=list(HealthCheck))
    @given(doc_and_patch())
    def check(pair):
        doc, ops = pair
        expected = apply_patch(doc, ops)
        try:
            got = ("ok", P.apply_to_value(doc, P.patch_from_ops(ops)))
        except P.ApplicationFailure as exc:
            got = ("error", (exc.index, exc.cause))
        seen["n"] += 1
        assert got[0] == expected[0]
        if got[0] == "ok":
            assert P.json_equal(got[1], expected[1])
        else:
            assert got[1] == expected[1]
            seen["errors"].add(got[1][1])

    started = time.perf_counter()
    check()
    elapsed = time.perf_counter() - started
    assert seen["n"] >= 1000
    assert {"missing", "bad_index", "test_failed"} <= seen["errors"]
    assert elapsed < 30, elapsed


@pytest.mark.criterion(2, "archive round-trip preserves assets and project.json")
def test_criterion_2_archive_round_trip():
    blobs = archive_fixtures(20)
    started = time.perf_counter()
    for blob in blobs:
        archive = load_archive(blob)
        again = load_archive(repack(archive, P.apply(archive.project, P.PatchDocument(()))))
        assert again.assets == archive.assets
        assert list(again.assets) == list(archive.assets)
        assert again.project == archive.project
    assert time.perf_counter() - started < 5


@pytest.mark.criterion(3, "deterministic 2x4x10 matrix, 80 records, replay identical")
def test_criterion_3_deterministic_matrix(corpus_root, tmp_path):
    started = time.perf_counter()
    first = _matrix_records(corpus_root, tmp_path / "first")
    spec = RunMatrixSpec.from_json(json.loads((corpus_root / "matrix.json").read_text()), base_dir=corpus_root)
    spec.output_dir = tmp_path / "second"
    second = run_matrix(spec).records
    elapsed = time.perf_counter() - started
    assert len(first) == len(second) == 80
    assert validate_spec(first, spec, [c.name for c in spec.cases]).passed
    assert [stable_view(r) for r in first] == [stable_view(r) for r in second]
    assert elapsed < 60, elapsed


@pytest.mark.criterion(4, "strict success implies generation success")
def test_criterion_4_metric_ordering(corpus_root, tmp_path):
    records = _matrix_records(corpus_root, tmp_path)
    assert all(r["generation_success"] for r in records if r["strict_success"])
    for s in A.aggregate_modes(records):
        assert s.strict_pct <= s.gen_pct


@pytest.mark.criterion(5, "mode-purity image audit")
def test_criterion_5_mode_purity(corpus_root, tmp_path):
    records = _matrix_records(corpus_root, tmp_path)
    by_mode = A.group_by_mode(records)
    assert all(r["images_sent_total"] == 0 for r in by_mode["text_only"])
    assert all(r["images_sent_total"] > 0 for r in by_mode["always_on"] if r["images_available_total"] > 0)
    audit = {a.mode: a.image_using_traj_pct for a in A.image_audit(records)}
    signals = {(r["signal"]["divergence"], r["signal"]["mismatch"], r["signal"]["stability"]) for r in by_mode["heuristic"]}
    escalating = {s for s in signals if s[0] == "early" or s[1] == "broad" or s[2] == "unstable"}
    assert escalating and signals - escalating  # corpus mixes both kinds of signal
    assert audit["text_only"] < audit["heuristic"] < audit["always_on"]


@pytest.mark.criterion(6, "controller decision table and fixed mode")
def test_criterion_6_decision_table():
    heuristic = ControllerConfig(mode="heuristic")
    table = {}
    for div, mis, stab in itertools.product(("early", "none", "late"), ("broad", "local"), ("stable", "unstable")):
        sig = ScheduleSignal(div, mis, stab, 0.0)
        table[(div, mis, stab)] = [decide_plan(heuristic, sig, a).id for a in range(3)]
    for (div, mis, stab), plans in table.items():
        escalate = div == "early" or mis == "broad" or stab == "unstable"
        assert plans == (["P2", "P3", "P3"] if escalate else ["P0", "P1", "P1"]), (div, mis, stab)
    fixed = ControllerConfig(mode="fixed")
    for key in table:
        assert {decide_plan(fixed, ScheduleSignal(*key, 0.5), a).id for a in range(3)} == {"P2"}


@pytest.mark.criterion(7, "aggregation fixture reproduces published numbers")
def test_criterion_7_fixture_reproduction():
    started = time.perf_counter()
    records = published_records()
    audits = {a.mode: a.display() for a in A.image_audit(records)}
    summaries = {s.mode: s.display() for s in A.aggregate_modes(records)}
    assert summaries["text_only"]["gen"] == "16.0"
    assert summaries["heuristic"]["gen"] == "30.3"
    assert summaries["heuristic"]["strict"] == "8.0"
    assert audits["heuristic"]["strict_over_gen"] == "26.4"
    assert audits["always_on"]["strict_over_gen"] == "25.3"
    d = A.overall_deltas(records, "heuristic", "always_on").display()
    assert (d["cost_red"], d["energy_red"]) == ("41.2", "41.9")
    assert A.round_display(A.reduction_pct("0.00696", "0.00409"), 1) == "41.2"
    assert A.round_display(A.reduction_pct("0.62", "0.36"), 1) == "41.9"
    assert time.perf_counter() - started < 5


# behaviors per attempt under text_only (cap 3) and the layer each one must land in
INJECTION = {
    "c01_wrong_sign": (["request", "prose", "bloated"], ["request", "extraction", "schema"]),
    "c02_late_score": (["bad_path", "noop", "fix"], ["application", "strict_verify", "success"]),
    "c05_wrong_costume": (["noop", "fix"], ["precheck", "success"]),
    "c03_wrong_message": (["oversized", "prose", "request"], ["schema", "extraction", "request"]),
    "c08_late_increment": (["wrong", "bad_path", "wrong"], ["strict_verify", "application", "strict_verify"]),
}


@pytest.mark.criterion(8, "failure layers partition failed attempts per injection plan")
def test_criterion_8_failure_layers(tmp_path):
    specs = {s.case_id: s for s in case_specs()}
    fixture = tmp_path / "fixture.json"
    fixture.write_text(json.dumps(build_fixture(list(specs.values()), {c: b for c, (b, _) in INJECTION.items()})))
    endpoint = ModelEndpoint("injector", "chat_style", ScriptedTransport(str(fixture)))
    config = ControllerConfig(mode="text_only")
    records = []
    for case_id, (_, expected) in INJECTION.items():
        case = load_case(write_case(specs[case_id], tmp_path / case_id))
        record = run_trajectory(case, endpoint, config)
        assert [a.outcome for a in record.attempts] == expected, case_id
        records.append(record.to_json())
    planned = {layer: 0 for layer in LAYERS}
    for _, outcomes in INJECTION.values():
        for o in outcomes:
            if o != "success":
                planned[o] += 1
    layers = A.failure_layers(records)["text_only"]
    assert layers["attempts"] == planned
    failed = sum(1 for r in records for a in r["attempts"] if a["outcome"] != "success")
    assert layers["failed_attempts"] == failed == sum(planned.values())
    assert all(planned[layer] > 0 for layer in LAYERS)


@pytest.mark.criterion(9, "verifier soundness, zero self-mismatch, random instability")
def test_criterion_9_verifier_properties():
    specs = case_specs()
    for spec in specs:
        gold = ProjectDocument(spec.gold)
        suite = TestSuite.from_json({"checks": spec.checks})
        assert full_verify(gold, suite).overall_pass, spec.case_id
        report = probe(gold, gold, suite)
        if spec.case_id != "c04_random_coins":
            assert report.mismatch_rate == 0, spec.case_id
    rnd = next(s for s in specs if s.case_id == "c04_random_coins")
    suite = TestSuite.from_json({"checks": rnd.checks})
    seeds = derive_seeds(0, 2)
    assert seeds[0] != seeds[1]
    report = probe(ProjectDocument(rnd.buggy), ProjectDocument(rnd.gold), suite, RunSchedule(60, 2, seeds))
    assert report.rerun_instability > 0


@pytest.mark.criterion(10, "cost sums and stub energy are exact")
def test_criterion_10_accounting(corpus_root, tmp_path):
    records = _matrix_records(corpus_root, tmp_path)
    for r in records:
        total = Decimal(r["total_cost_usd"])
        lines = sum((Decimal(a["cost_usd"]) for a in r["attempts"]), Decimal(0))
        assert abs(total - lines) <= Decimal("1e-12")
        assert total == sum((Decimal(c["usd"]) for c in r["cost_lines"]), Decimal(0))
        energy = r["energy"]
        assert energy["method"] == "stub"
        assert r["total_energy_wh"] == energy["wall_ms"] * energy["configured_power_w"] / 3.6e6
        assert r["total_energy_wh"] == stub_energy_wh(energy["wall_ms"], energy["configured_power_w"])
    assert any(Decimal(r["total_cost_usd"]) > 0 for r in records)
