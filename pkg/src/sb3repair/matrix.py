"""Matrix runs over (endpoint, mode, case) triples with resume and completeness checks."""
from __future__ import annotations

import json
import shutil
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from . import __version__
from .accounting import EnergyTracker, Pricing, load_pricing_table
from .controller import MODES, ControllerConfig
from .gateway import ModelEndpoint
from .runner import FixtureError, RepairCase, load_case, run_trajectory

RECORD_FILE = "record.json"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class EnergySettings:
    method: str = "stub"
    power_w: float = 10.0
    interval_s: float = 0.05

    def tracker(self) -> EnergyTracker:
        return EnergyTracker(self.method, power_w=self.power_w, interval_s=self.interval_s)

    def to_json(self) -> dict[str, Any]:
        return {"method": self.method, "power_w": self.power_w, "interval_s": self.interval_s}


@dataclass
class RunMatrixSpec:
    endpoints: list[ModelEndpoint]
    modes: list[str]
    cases: list[Path]
    seed: int = 0
    output_dir: Path = Path("out")
    parallelism: int = 1
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    energy: EnergySettings = field(default_factory=EnergySettings)

    def __post_init__(self) -> None:
        self.cases = [Path(c) for c in self.cases]
        self.output_dir = Path(self.output_dir)
        if self.parallelism < 1:
            raise ValueError("parallelism must be positive")
        for mode in self.modes:
            if mode not in MODES:
                raise ValueError(f"unknown controller mode {mode!r}")
        ids = [e.model_id for e in self.endpoints]
        dup = [k for k, n in Counter(ids).items() if n > 1] + [m for m, n in Counter(self.modes).items() if n > 1]
        dup += [c.name for c, n in Counter(self.cases).items() if n > 1]
        if dup:
            raise ValueError(f"matrix triples must be unique; repeated: {sorted(set(map(str, dup)))}")

    def triples(self, case_ids: Iterable[str] | None = None) -> list[tuple[str, str, str]]:
        ids = list(case_ids) if case_ids is not None else [c.name for c in self.cases]
        return [(e.model_id, m, c) for e in self.endpoints for m in self.modes for c in ids]

    @classmethod
    def from_json(
        cls,
        obj: Mapping[str, Any],
        base_dir: Path | None = None,
        pricing_table: Mapping[str, Pricing] | None = None,
    ) -> "RunMatrixSpec":
        base_dir = base_dir or Path(".")
        if pricing_table is None and obj.get("pricing_file"):
            pricing_table = load_pricing_table(base_dir / obj["pricing_file"])
        endpoints = [ModelEndpoint.from_json(e, pricing_table, base_dir) for e in obj["endpoints"]]
        if pricing_table:
            endpoints = [
                ModelEndpoint(e.model_id, e.request_style, e.transport, pricing_table[e.model_id])
                if e.model_id in pricing_table
                else e
                for e in endpoints
            ]
        cases_dir = obj.get("cases_dir")
        cases = [base_dir / c for c in obj.get("cases", [])]
        if cases_dir:
            cases += discover_cases(base_dir / cases_dir)
        return cls(
            endpoints=endpoints,
            modes=list(obj.get("modes", MODES)),
            cases=cases,
            seed=int(obj.get("seed", 0)),
            output_dir=base_dir / obj.get("output_dir", "out"),
            parallelism=int(obj.get("parallelism", 1)),
            controller=ControllerConfig.from_json(obj.get("controller", {})),
            energy=EnergySettings(**obj.get("energy", {})),
        )


def discover_cases(root: str | Path) -> list[Path]:
    root = Path(root)
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / "suite.json").exists())


def cell_dir(output_dir: Path, model_id: str, mode: str, case_id: str) -> Path:
    return output_dir / model_id / mode / case_id


def manifest(spec: RunMatrixSpec, case_ids: list[str]) -> dict[str, Any]:
    config = spec.controller.with_seed(spec.seed)
    return {
        "tool": "sb3repair",
        "tool_version": __version__,
        "seed": spec.seed,
        "modes": list(spec.modes),
        "cases": case_ids,
        "endpoints": [e.to_json() for e in spec.endpoints],
        "pricing": {e.model_id: e.pricing.to_json() for e in spec.endpoints},
        "controller": config.to_json(),
        "thresholds": config.thresholds.to_json(),
        "plan_ladder": [p.to_json() for p in config.plan_ladder],
        "energy": spec.energy.to_json(),
        "parallelism": spec.parallelism,
    }


@dataclass
class MatrixResult:
    records: list[dict[str, Any]]
    executed: int
    skipped: int
    manifest: dict[str, Any]


def load_cases(paths: Iterable[Path]) -> list[RepairCase]:
    """Load every case and check gold soundness; the first bad fixture aborts the run."""
    cases = [load_case(p) for p in paths]
    ids = [c.case_id for c in cases]
    dup = sorted(k for k, n in Counter(ids).items() if n > 1)
    if dup:
        raise FixtureError(dup[0], "duplicate case id")
    return cases


def run_matrix(spec: RunMatrixSpec) -> MatrixResult:
    cases = load_cases(spec.cases)
    by_id = {c.case_id: c for c in cases}
    endpoints = {e.model_id: e for e in spec.endpoints}
    base_config = spec.controller.with_seed(spec.seed)
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    info = manifest(spec, list(by_id))
    (spec.output_dir / MANIFEST_FILE).write_text(json.dumps(info, indent=2, sort_keys=True))

    pending = []
    skipped = 0
    for model_id, mode, case_id in spec.triples(by_id):
        out = cell_dir(spec.output_dir, model_id, mode, case_id)
        if (out / RECORD_FILE).exists():
            skipped += 1
            continue
        if out.exists():
            # an interrupted trajectory is rerun from scratch
            shutil.rmtree(out)
        pending.append((model_id, mode, case_id, out))

    def work(item: tuple[str, str, str, Path]) -> None:
        model_id, mode, case_id, out = item
        run_trajectory(
            by_id[case_id],
            endpoints[model_id],
            base_config.with_mode(mode),
            out_dir=out,
            energy=spec.energy.tracker(),
        )

    if spec.parallelism == 1:
        for item in pending:
            work(item)
    else:
        with ThreadPoolExecutor(max_workers=spec.parallelism) as pool:
            for _ in pool.map(work, pending):
                pass

    return MatrixResult(load_records(spec.output_dir), len(pending), skipped, info)


def load_records(output_dir: str | Path) -> list[dict[str, Any]]:
    root = Path(output_dir)
    return [json.loads(p.read_text()) for p in sorted(root.glob(f"*/*/*/{RECORD_FILE}"))]


@dataclass
class CompletenessReport:
    cell_counts: dict[tuple[str, str], int]
    expected_per_cell: int
    missing: list[tuple[str, str, str]]
    duplicates: list[tuple[str, str, str]]
    unexpected: list[tuple[str, str, str]]

    @property
    def passed(self) -> bool:
        return (
            not self.missing
            and not self.duplicates
            and not self.unexpected
            and all(n == self.expected_per_cell for n in self.cell_counts.values())
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "expected_per_cell": self.expected_per_cell,
            "cell_counts": [{"model_id": m, "mode": k, "count": n} for (m, k), n in sorted(self.cell_counts.items())],
            "missing": [list(t) for t in self.missing],
            "duplicates": [list(t) for t in self.duplicates],
            "unexpected": [list(t) for t in self.unexpected],
        }


def validate_matrix(
    records: Iterable[Mapping[str, Any]],
    model_ids: Iterable[str],
    modes: Iterable[str],
    case_ids: Iterable[str],
) -> CompletenessReport:
    model_ids, modes, case_ids = list(model_ids), list(modes), list(case_ids)
    expected = {(m, k, c) for m in model_ids for k in modes for c in case_ids}
    seen = Counter((r["model_id"], r["mode"], r["case_id"]) for r in records)
    cells: dict[tuple[str, str], int] = {(m, k): 0 for m in model_ids for k in modes}
    for (m, k, _), n in seen.items():
        cells[(m, k)] = cells.get((m, k), 0) + n
    return CompletenessReport(
        cell_counts=cells,
        expected_per_cell=len(case_ids),
        missing=sorted(expected - set(seen)),
        duplicates=sorted(t for t, n in seen.items() if n > 1),
        unexpected=sorted(set(seen) - expected),
    )


def validate_spec(records: Iterable[Mapping[str, Any]], spec: RunMatrixSpec, case_ids: Iterable[str] | None = None) -> CompletenessReport:
    ids = list(case_ids) if case_ids is not None else [c.name for c in spec.cases]
    return validate_matrix(records, [e.model_id for e in spec.endpoints], spec.modes, ids)
