"""Evaluation metrics and grouped aggregation.

Overall accuracy weights every sample equally; mean (balanced) accuracy
averages the two per-class accuracies, so a majority-class-only model
lands at 50%.  Groups that contain a single class report that class's
accuracy as their mean accuracy but carry a flag, mirroring how per-patch
tables treat single-class patches.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .core import CLASSES
from .errors import (
    EmptyEval,
    MissingAttribute,
    MissingClass,
    TooFewRuns,
)


@dataclass
class EvalRecord:
    sample_id: str
    label: str  # "low" or "high"
    predicted: str
    confidence: float  # probability assigned to the predicted class
    patch_id: str = ""
    year: int = 0
    region: str | None = None


@dataclass
class MetricsSummary:
    oacc: float
    macc: float
    acc_high: float | None
    acc_low: float | None
    n_total: int
    n_high: int
    n_low: int
    all_classes: bool  # False when a class is absent (macc is one-sided)


def make_record(sample_id: str, p_low: float, p_high: float, label: str,
                patch_id: str = "", year: int = 0,
                region: str | None = None) -> EvalRecord:
    """Argmax of a probability pair; an exact tie predicts low."""
    total = p_low + p_high
    predicted = "high" if p_high > p_low else "low"
    conf = (p_high if predicted == "high" else p_low)
    if total > 0:
        conf /= total
    return EvalRecord(sample_id=sample_id, label=label, predicted=predicted,
                      confidence=conf, patch_id=patch_id, year=year,
                      region=region)


def summarize(records: list[EvalRecord]) -> MetricsSummary:
    """Metrics over any record set; single-class sets are flagged."""
    if not records:
        raise EmptyEval("no evaluation records")
    n = {c: 0 for c in CLASSES}
    hit = {c: 0 for c in CLASSES}
    for r in records:
        n[r.label] += 1
        if r.predicted == r.label:
            hit[r.label] += 1
    accs = {c: hit[c] / n[c] for c in CLASSES if n[c] > 0}
    return MetricsSummary(
        oacc=sum(hit.values()) / len(records),
        macc=sum(accs.values()) / len(accs),
        acc_high=accs.get("high"),
        acc_low=accs.get("low"),
        n_total=len(records),
        n_high=n["high"],
        n_low=n["low"],
        all_classes=len(accs) == len(CLASSES),
    )


def overall_accuracy(records: list[EvalRecord]) -> float:
    if not records:
        raise EmptyEval("no evaluation records")
    return sum(1 for r in records if r.predicted == r.label) / len(records)


def mean_accuracy(records: list[EvalRecord]) -> MetricsSummary:
    """Strict balanced accuracy; both classes must appear."""
    s = summarize(records)
    if not s.all_classes:
        missing = [c for c, k in (("high", s.n_high), ("low", s.n_low)) if k == 0]
        raise MissingClass(f"records contain no {' or '.join(missing)} samples")
    return s


@dataclass
class PatchRow:
    patch_id: str
    label: str
    n: int
    macc: dict[str, float]  # model name -> per-patch mean accuracy
    best: tuple[str, ...]  # model(s) achieving the row maximum


def per_patch_table(records_by_model: dict[str, list[EvalRecord]]
                    ) -> list[PatchRow]:
    """Per-patch mean accuracy per model, best-first by cross-model average.

    Per-patch mean accuracy is computed over the classes present in the
    patch, so a single-class patch scores its class accuracy.
    """
    models = list(records_by_model)
    by_patch: dict[str, dict[str, list[EvalRecord]]] = {}
    for model in models:
        for r in records_by_model[model]:
            by_patch.setdefault(r.patch_id, {}).setdefault(model, []).append(r)
    rows = []
    for patch_id, per_model in by_patch.items():
        maccs = {}
        n = 0
        label = ""
        for model in models:
            recs = per_model.get(model, [])
            if not recs:
                continue
            maccs[model] = summarize(recs).macc
            n = max(n, len(recs))
            label = recs[0].label
        top = max(maccs.values())
        best = tuple(m for m in models if m in maccs and maccs[m] == top)
        rows.append(PatchRow(patch_id=patch_id, label=label, n=n,
                             macc=maccs, best=best))
    rows.sort(key=lambda r: (-sum(r.macc.values()) / len(r.macc), r.patch_id))
    return rows


def grouped_metrics(records: list[EvalRecord], key: str
                    ) -> dict[str | int, MetricsSummary]:
    """Metrics within each group of `key` in {"year", "region", "patch"}."""
    attr = {"year": "year", "region": "region", "patch": "patch_id"}.get(key)
    if attr is None:
        raise MissingAttribute(f"unknown grouping key {key!r}")
    groups: dict[str | int, list[EvalRecord]] = {}
    for r in records:
        value = getattr(r, attr)
        if value is None or value == "" or (attr == "year" and value == 0):
            raise MissingAttribute(
                f"record {r.sample_id} has no {key} attribute")
        groups.setdefault(value, []).append(r)
    return {k: summarize(groups[k]) for k in sorted(groups, key=str)}


def run_stats(runs: list[MetricsSummary]
              ) -> dict[str, tuple[float, float]]:
    """Mean and sample standard deviation (n-1) of each metric over runs."""
    if len(runs) < 2:
        raise TooFewRuns(f"need at least 2 runs, got {len(runs)}")
    out = {}
    for field_name in ("oacc", "macc", "acc_high", "acc_low"):
        values = [getattr(r, field_name) for r in runs]
        if any(v is None for v in values):
            continue
        n = len(values)
        mean = sum(values) / n
        var = sum((v - mean) ** 2 for v in values) / (n - 1)
        out[field_name] = (mean, var ** 0.5)
    return out


def pct(x: float, decimals: int = 1) -> str:
    """Fraction to percent with half-up rounding, e.g. 0.7545 -> '75.5'.

    Rounds at six decimals first so binary noise just below a .x5
    boundary (0.75449999...) still lands on the intended side.
    """
    d = Decimal(str(round(x * 100.0, 6)))
    q = Decimal(1).scaleb(-decimals)
    return str(d.quantize(q, rounding=ROUND_HALF_UP))
