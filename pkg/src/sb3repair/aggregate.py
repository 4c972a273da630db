"""Mode summaries, image audit, failure layers and per-model deltas over trajectory records.

Every function here is a pure function of the record set. Exact values are
Decimals; display helpers round half-up to the printed precision.
"""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Iterable, Mapping, Sequence

from .controller import MODES
from .runner import LAYERS

MODE_LABELS = {
    "text_only": "Text-only",
    "always_on": "Always-on multimodal",
    "fixed": "Fixed multimodal",
    "heuristic": "Heuristic",
}
VERIFIER_LAYERS = ("precheck", "strict_verify")
PARSE_LAYERS = ("extraction", "schema")

Record = Mapping[str, Any]


class MissingCell(KeyError):
    def __init__(self, model_id: str, mode: str):
        super().__init__(f"no records for model {model_id!r} in mode {mode!r}")
        self.model_id = model_id
        self.mode = mode


def _dec(value: Any) -> Decimal:
    return value if isinstance(value, Decimal) else Decimal(str(value))


def pct(part: Any, whole: Any) -> Decimal | None:
    whole = _dec(whole)
    if whole == 0:
        return None
    return _dec(part) * 100 / whole


def reduction_pct(baseline: Any, treatment: Any) -> Decimal | None:
    baseline = _dec(baseline)
    if baseline == 0:
        return None
    return (baseline - _dec(treatment)) * 100 / baseline


def round_display(value: Decimal | None, places: int) -> str:
    if value is None:
        return "n/a"
    return str(value.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def _mean(values: Sequence[Decimal]) -> Decimal:
    return sum(values, Decimal(0)) / len(values) if values else Decimal(0)


def _as_json(record: Any) -> Mapping[str, Any]:
    return record.to_json() if hasattr(record, "to_json") else record


def group_by_mode(records: Iterable[Any]) -> dict[str, list[Mapping[str, Any]]]:
    groups: dict[str, list[Mapping[str, Any]]] = defaultdict(list)
    for r in records:
        r = _as_json(r)
        groups[r["mode"]].append(r)
    return dict(groups)


def _mode_order(modes: Iterable[str]) -> list[str]:
    known = [m for m in MODES if m in modes]
    return known + sorted(m for m in modes if m not in MODES)


# -- mode summary ------------------------------------------------------------------


@dataclass(frozen=True)
class ModeSummary:
    mode: str
    trajectories: int
    gen_count: int
    strict_count: int
    gen_pct: Decimal
    strict_pct: Decimal
    mean_cost_usd: Decimal
    mean_images: Decimal
    mean_attempts: Decimal
    mean_energy_wh: Decimal

    def display(self) -> dict[str, str]:
        return {
            "mode": MODE_LABELS.get(self.mode, self.mode),
            "gen": round_display(self.gen_pct, 1),
            "strict": round_display(self.strict_pct, 1),
            "cost": round_display(self.mean_cost_usd, 5),
            "images": round_display(self.mean_images, 2),
            "attempts": round_display(self.mean_attempts, 2),
            "energy": round_display(self.mean_energy_wh, 2),
        }

    def to_json(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "trajectories": self.trajectories,
            "gen_count": self.gen_count,
            "strict_count": self.strict_count,
            "gen_pct": str(self.gen_pct),
            "strict_pct": str(self.strict_pct),
            "mean_cost_usd": str(self.mean_cost_usd),
            "mean_images": str(self.mean_images),
            "mean_attempts": str(self.mean_attempts),
            "mean_energy_wh": str(self.mean_energy_wh),
        }


def summarize(mode: str, records: Sequence[Mapping[str, Any]]) -> ModeSummary:
    n = len(records)
    gen = sum(1 for r in records if r["generation_success"])
    strict = sum(1 for r in records if r["strict_success"])
    return ModeSummary(
        mode=mode,
        trajectories=n,
        gen_count=gen,
        strict_count=strict,
        gen_pct=pct(gen, n) or Decimal(0),
        strict_pct=pct(strict, n) or Decimal(0),
        mean_cost_usd=_mean([_dec(r["total_cost_usd"]) for r in records]),
        mean_images=_mean([_dec(r["images_sent_total"]) for r in records]),
        mean_attempts=_mean([_dec(r.get("attempt_count", len(r.get("attempts", [])))) for r in records]),
        mean_energy_wh=_mean([_dec(r["total_energy_wh"]) for r in records]),
    )


def aggregate_modes(records: Iterable[Any]) -> list[ModeSummary]:
    groups = group_by_mode(records)
    if not groups:
        raise ValueError("no records to aggregate")
    return [summarize(m, groups[m]) for m in _mode_order(groups)]


# -- image audit -------------------------------------------------------------------


@dataclass(frozen=True)
class ImageAudit:
    mode: str
    trajectories: int
    gen_count: int
    strict_count: int
    strict_over_gen_pct: Decimal | None
    image_using_traj_pct: Decimal

    def display(self) -> dict[str, str]:
        return {
            "mode": MODE_LABELS.get(self.mode, self.mode),
            "gen_count": str(self.gen_count),
            "strict_count": str(self.strict_count),
            "strict_over_gen": round_display(self.strict_over_gen_pct, 1),
            "image_traj": round_display(self.image_using_traj_pct, 1),
        }

    def to_json(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "trajectories": self.trajectories,
            "gen_count": self.gen_count,
            "strict_count": self.strict_count,
            "strict_over_gen_pct": None if self.strict_over_gen_pct is None else str(self.strict_over_gen_pct),
            "image_using_traj_pct": str(self.image_using_traj_pct),
        }


def image_audit(records: Iterable[Any]) -> list[ImageAudit]:
    groups = group_by_mode(records)
    out = []
    for mode in _mode_order(groups):
        rs = groups[mode]
        gen = sum(1 for r in rs if r["generation_success"])
        strict = sum(1 for r in rs if r["strict_success"])
        using = sum(1 for r in rs if r["images_sent_total"] > 0)
        out.append(ImageAudit(mode, len(rs), gen, strict, pct(strict, gen), pct(using, len(rs)) or Decimal(0)))
    return out


# -- failure layers -----------------------------------------------------------------


def failure_layers(records: Iterable[Any], stop_view: bool = False) -> dict[str, dict[str, Any]]:
    """Per-mode failed-attempt counts by layer.

    ``attempts`` counts every failed attempt. ``final`` counts unsuccessful
    trajectories by the layer of their last attempt. With ``stop_view`` the
    report also partitions unsuccessful trajectories by where they stopped:
    ``verifier_stage`` holds those that produced an applied candidate, while
    ``request``, ``parse`` (extraction plus schema) and ``application`` hold
    the rest by final layer. ``parse_attempts`` is the merged attempt count.
    """
    groups = group_by_mode(records)
    out: dict[str, dict[str, Any]] = {}
    for mode in _mode_order(groups):
        attempts = {layer: 0 for layer in LAYERS}
        final = {layer: 0 for layer in LAYERS}
        stopped = {"request": 0, "parse": 0, "application": 0, "verifier_stage": 0}
        for r in groups[mode]:
            for a in r["attempts"]:
                if a["outcome"] != "success":
                    attempts[a["outcome"]] += 1
            if r["strict_success"] or not r["attempts"]:
                continue
            last = r["attempts"][-1]["outcome"]
            final[last] += 1
            if r["generation_success"] or last in VERIFIER_LAYERS:
                stopped["verifier_stage"] += 1
            else:
                stopped["parse" if last in PARSE_LAYERS else last] += 1
        entry: dict[str, Any] = {"attempts": attempts, "final": final, "failed_attempts": sum(attempts.values())}
        if stop_view:
            entry.update(stopped)
            entry["parse_attempts"] = sum(attempts[k] for k in PARSE_LAYERS)
        out[mode] = entry
    return out


# -- deltas ------------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaReport:
    model_id: str
    baseline_mode: str
    treatment_mode: str
    gen_gain_pp: Decimal
    strict_gain_pp: Decimal
    cost_reduction_pct: Decimal | None
    energy_reduction_pct: Decimal | None

    def display(self) -> dict[str, str]:
        gain = self.gen_gain_pp.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
        return {
            "model": self.model_id,
            "gen_gain": f"{'+' if gain >= 0 else ''}{gain}",
            "cost_red": round_display(self.cost_reduction_pct, 1),
            "energy_red": round_display(self.energy_reduction_pct, 1),
        }

    def to_json(self) -> dict[str, Any]:
        def s(v: Decimal | None) -> str | None:
            return None if v is None else str(v)

        return {
            "model_id": self.model_id,
            "baseline_mode": self.baseline_mode,
            "treatment_mode": self.treatment_mode,
            "gen_gain_pp": str(self.gen_gain_pp),
            "strict_gain_pp": str(self.strict_gain_pp),
            "cost_reduction_pct": s(self.cost_reduction_pct),
            "energy_reduction_pct": s(self.energy_reduction_pct),
        }


def delta(model_id: str, baseline: ModeSummary, treatment: ModeSummary) -> DeltaReport:
    return DeltaReport(
        model_id=model_id,
        baseline_mode=baseline.mode,
        treatment_mode=treatment.mode,
        gen_gain_pp=treatment.gen_pct - baseline.gen_pct,
        strict_gain_pp=treatment.strict_pct - baseline.strict_pct,
        cost_reduction_pct=reduction_pct(baseline.mean_cost_usd, treatment.mean_cost_usd),
        energy_reduction_pct=reduction_pct(baseline.mean_energy_wh, treatment.mean_energy_wh),
    )


def pairwise_deltas(records: Iterable[Any], treatment_mode: str, baseline_mode: str) -> list[DeltaReport]:
    cells: dict[tuple[str, str], list[Mapping[str, Any]]] = defaultdict(list)
    for r in records:
        r = _as_json(r)
        cells[(r["model_id"], r["mode"])].append(r)
    models = sorted({m for m, _ in cells})
    out = []
    for model in models:
        for mode in (baseline_mode, treatment_mode):
            if not cells.get((model, mode)):
                raise MissingCell(model, mode)
        out.append(
            delta(
                model,
                summarize(baseline_mode, cells[(model, baseline_mode)]),
                summarize(treatment_mode, cells[(model, treatment_mode)]),
            )
        )
    return out


def overall_deltas(records: Iterable[Any], treatment_mode: str, baseline_mode: str) -> DeltaReport:
    groups = group_by_mode(records)
    for mode in (baseline_mode, treatment_mode):
        if not groups.get(mode):
            raise MissingCell("*", mode)
    return delta("*", summarize(baseline_mode, groups[baseline_mode]), summarize(treatment_mode, groups[treatment_mode]))


# -- rendering ---------------------------------------------------------------------


def format_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]

    def line(cells: Sequence[str]) -> str:
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()

    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([line(headers), rule, *(line(r) for r in rows)])


def mode_table(summaries: Sequence[ModeSummary]) -> str:
    headers = ["Mode", "Gen.", "Strict", "Cost ($)", "Avg. input images", "Attempts", "Energy (Wh)"]
    keys = ["mode", "gen", "strict", "cost", "images", "attempts", "energy"]
    return format_table(headers, [[s.display()[k] for k in keys] for s in summaries])


def audit_table(audits: Sequence[ImageAudit]) -> str:
    headers = ["Mode", "Gen. count", "Strict count", "Strict/gen. (%)", "Trajectories using images (%)"]
    keys = ["mode", "gen_count", "strict_count", "strict_over_gen", "image_traj"]
    return format_table(headers, [[a.display()[k] for k in keys] for a in audits])


def delta_table(groups: Mapping[str, Sequence[DeltaReport]]) -> str:
    """Per-model deltas, one column block per baseline mode."""
    baselines = list(groups)
    headers = ["Model"]
    for b in baselines:
        label = MODE_LABELS.get(b, b)
        headers += [f"Gen. gain (pp) vs {label}", "Cost red. (%)", "Energy red. (%)"]
    models = sorted({d.model_id for ds in groups.values() for d in ds})
    rows = []
    for model in models:
        row = [model]
        for b in baselines:
            d = next((d for d in groups[b] if d.model_id == model), None)
            if d is None:
                row += ["n/a"] * 3
            else:
                shown = d.display()
                row += [shown["gen_gain"], shown["cost_red"], shown["energy_red"]]
        rows.append(row)
    return format_table(headers, rows)


def layer_table(layers: Mapping[str, Mapping[str, Any]]) -> str:
    headers = ["Mode", *LAYERS, "parse (merged)", "stopped: parse", "stopped: application", "stopped: verifier stage"]
    rows = []
    for mode, entry in layers.items():
        a = entry["attempts"]
        merged = sum(a[k] for k in PARSE_LAYERS)
        stops = [str(entry.get(k, "n/a")) for k in ("parse", "application", "verifier_stage")]
        rows.append([MODE_LABELS.get(mode, mode), *(str(a[k]) for k in LAYERS), str(merged), *stops])
    return format_table(headers, rows)


def summary_csv(summaries: Sequence[ModeSummary], audits: Sequence[ImageAudit]) -> str:
    by_mode = {a.mode: a for a in audits}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "mode",
            "trajectories",
            "gen_count",
            "strict_count",
            "gen_pct",
            "strict_pct",
            "mean_cost_usd",
            "mean_images",
            "mean_attempts",
            "mean_energy_wh",
            "strict_over_gen_pct",
            "image_using_traj_pct",
        ]
    )
    for s in summaries:
        a = by_mode.get(s.mode)
        sog = "" if a is None or a.strict_over_gen_pct is None else str(a.strict_over_gen_pct)
        writer.writerow(
            [
                s.mode,
                s.trajectories,
                s.gen_count,
                s.strict_count,
                s.gen_pct,
                s.strict_pct,
                s.mean_cost_usd,
                s.mean_images,
                s.mean_attempts,
                s.mean_energy_wh,
                sog,
                "" if a is None else a.image_using_traj_pct,
            ]
        )
    return buf.getvalue()


def build_summary(records: Sequence[Any], treatment_mode: str = "heuristic") -> dict[str, Any]:
    """Everything the ``aggregate`` command writes to summary.json."""
    records = [_as_json(r) for r in records]
    summaries = aggregate_modes(records)
    modes = [s.mode for s in summaries]
    deltas: dict[str, Any] = {}
    if treatment_mode in modes:
        for baseline in ("always_on", "fixed"):
            if baseline in modes:
                try:
                    per_model = [d.to_json() for d in pairwise_deltas(records, treatment_mode, baseline)]
                except MissingCell as exc:
                    per_model = [{"error": str(exc)}]
                deltas[baseline] = {
                    "overall": overall_deltas(records, treatment_mode, baseline).to_json(),
                    "per_model": per_model,
                }
    return {
        "record_count": len(records),
        "modes": [s.to_json() for s in summaries],
        "image_audit": [a.to_json() for a in image_audit(records)],
        "failure_layers": failure_layers(records, stop_view=True),
        "deltas": {"treatment": treatment_mode, "baselines": deltas},
    }
