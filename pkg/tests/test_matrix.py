from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from sb3repair.matrix import (
    RECORD_FILE,
    RunMatrixSpec,
    cell_dir,
    load_records,
    run_matrix,
    validate_matrix,
    validate_spec,
)
from sb3repair.runner import FixtureError

CASES = ["c01_wrong_sign", "c02_late_score", "c03_wrong_message"]


def _spec(corpus_root: Path, out: Path, **overrides) -> RunMatrixSpec:
    obj = json.loads((corpus_root / "matrix.json").read_text())
    obj.pop("cases_dir")
    obj["cases"] = [f"cases/{c}" for c in CASES]
    obj["modes"] = ["text_only", "heuristic"]
    obj.update(overrides)
    spec = RunMatrixSpec.from_json(obj, base_dir=corpus_root)
    spec.output_dir = out
    return spec


def test_spec_from_json_resolves_paths_and_pricing(corpus_root):
    spec = RunMatrixSpec.from_json(json.loads((corpus_root / "matrix.json").read_text()), base_dir=corpus_root)
    assert len(spec.endpoints) == 2 and len(spec.cases) == 10 and len(spec.modes) == 4
    assert len(spec.triples()) == 80
    assert all(e.pricing.usd_per_1m_input_tokens > 0 for e in spec.endpoints)
    assert Path(spec.endpoints[0].transport.fixture_path).is_file()


def test_spec_rejects_duplicates_and_bad_values(corpus_root):
    with pytest.raises(ValueError, match="unique"):
        _spec(corpus_root, Path("x"), modes=["fixed", "fixed"])
    with pytest.raises(ValueError):
        _spec(corpus_root, Path("x"), modes=["sometimes"])
    with pytest.raises(ValueError):
        _spec(corpus_root, Path("x"), parallelism=0)


def test_run_resume_and_validate(corpus_root, tmp_path):
    out = tmp_path / "out"
    spec = _spec(corpus_root, out, parallelism=3)
    first = run_matrix(spec)
    assert (first.executed, first.skipped, len(first.records)) == (12, 0, 12)
    assert validate_spec(first.records, spec).passed
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["thresholds"] == {"early_tick_max": 5, "broad_mismatch_min": 0.5, "instability_min": 1e-12}
    assert [p["id"] for p in manifest["plan_ladder"]] == ["P0", "P1", "P2", "P3"]
    assert manifest["cases"] == CASES

    again = run_matrix(spec)
    assert (again.executed, again.skipped) == (0, 12)

    # an interrupted cell (trace but no record) is rerun from scratch
    cell = cell_dir(out, spec.endpoints[0].model_id, "heuristic", CASES[0])
    (cell / RECORD_FILE).unlink()
    resumed = run_matrix(spec)
    assert (resumed.executed, resumed.skipped) == (1, 11)
    assert len(load_records(out)) == 12


def test_parallel_and_serial_runs_agree(corpus_root, tmp_path):
    from sb3repair.runner import stable_view

    a = run_matrix(_spec(corpus_root, tmp_path / "a", parallelism=1)).records
    b = run_matrix(_spec(corpus_root, tmp_path / "b", parallelism=4)).records
    assert [stable_view(r) for r in a] == [stable_view(r) for r in b]


def test_bad_fixture_fails_before_any_trajectory(corpus_root, tmp_path):
    cases = tmp_path / "cases"
    shutil.copytree(corpus_root / "cases" / CASES[0], cases / CASES[0])
    shutil.copytree(corpus_root / "cases" / CASES[1], cases / "broken")
    (cases / "broken" / "gold.sb3").write_bytes((cases / "broken" / "buggy.sb3").read_bytes())
    obj = json.loads((corpus_root / "matrix.json").read_text())
    obj["cases_dir"] = str(cases)
    spec = RunMatrixSpec.from_json(obj, base_dir=corpus_root)
    spec.output_dir = tmp_path / "out"
    with pytest.raises(FixtureError) as info:
        run_matrix(spec)
    assert info.value.case == "broken"
    assert not (tmp_path / "out").exists()


def _records(models, modes, cases):
    return [{"model_id": m, "mode": k, "case_id": c} for m in models for k in modes for c in cases]


def test_validate_matrix_reports():
    models, modes, cases = ["a", "b"], ["text_only", "heuristic"], [f"c{i}" for i in range(10)]
    full = _records(models, modes, cases)
    report = validate_matrix(full, models, modes, cases)
    assert report.passed and set(report.cell_counts.values()) == {10}
    assert sum(report.cell_counts.values()) == len(full)

    report = validate_matrix(full[1:], models, modes, cases)
    assert not report.passed and report.missing == [("a", "text_only", "c0")]

    report = validate_matrix(full + [full[5]], models, modes, cases)
    assert not report.passed and report.duplicates == [("a", "text_only", "c5")]

    report = validate_matrix(full + [{"model_id": "z", "mode": "fixed", "case_id": "c0"}], models, modes, cases)
    assert not report.passed and report.unexpected == [("z", "fixed", "c0")]
    assert report.to_json()["pass"] is False
