"""Metric definitions, grouped aggregation, and percent formatting."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from biovista.errors import (EmptyEval, MissingAttribute, MissingClass,
                             TooFewRuns)
from biovista.metrics import (EvalRecord, MetricsSummary, grouped_metrics,
                              make_record, mean_accuracy, overall_accuracy,
                              pct, per_patch_table, run_stats, summarize)


def records_from_counts(n_high, hit_high, n_low, hit_low, **kw):
    """hit/total per class, deterministic layout."""
    recs = []
    for i in range(n_high):
        pred = "high" if i < hit_high else "low"
        recs.append(EvalRecord(f"h{i}", "high", pred, 0.9, **kw))
    for i in range(n_low):
        pred = "low" if i < hit_low else "high"
        recs.append(EvalRecord(f"l{i}", "low", pred, 0.9, **kw))
    return recs


# --- headline identities -----------------------------------------------------

def test_macc_is_mean_of_class_accuracies():
    # 87.6% on high, 51.2% on low -> 69.4% balanced
    recs = records_from_counts(1000, 876, 1000, 512)
    s = mean_accuracy(recs)
    assert s.acc_high == 0.876
    assert s.acc_low == 0.512
    assert s.macc == pytest.approx(0.694, abs=1e-12)
    assert pct(s.macc) == "69.4"


def test_macc_half_up_boundary():
    # (87.3 + 63.6) / 2 = 75.45, which half-up formats to 75.5
    recs = records_from_counts(1000, 873, 1000, 636)
    s = mean_accuracy(recs)
    assert s.macc == pytest.approx(0.7545, abs=1e-12)
    assert pct(s.macc) == "75.5"


def test_oacc_weights_by_class_size():
    # class-imbalanced: 4287 high / 4446 low, same per-class rates as above
    n_high, n_low = 4287, 4446
    hit_high = round(0.876 * n_high)  # 3755
    hit_low = round(0.512 * n_low)    # 2276
    recs = records_from_counts(n_high, hit_high, n_low, hit_low)
    oacc = overall_accuracy(recs)
    assert oacc == pytest.approx((hit_high + hit_low) / (n_high + n_low))
    assert oacc == pytest.approx(0.6906, abs=5e-4)
    assert pct(oacc) == "69.1"
    # balanced accuracy differs under imbalance
    s = summarize(recs)
    assert abs(s.macc - oacc) > 0.001


def test_single_patch_accuracy_row():
    # 142-sample patch: per-model correct counts map to fixed percents
    for hits, want in ((77, "54.2"), (115, "81.0"), (113, "79.6"),
                       (139, "97.9")):
        recs = records_from_counts(142, hits, 0, 0)
        s = summarize(recs)
        assert s.all_classes is False
        assert s.macc == hits / 142
        assert pct(s.macc) == want


def test_duplication_invariance_of_macc():
    base = records_from_counts(10, 9, 40, 20)
    s1 = summarize(base)
    # quadruple the minority class: macc unchanged, oacc moves
    boosted = records_from_counts(40, 36, 40, 20)
    s2 = summarize(boosted)
    assert s1.macc == pytest.approx(s2.macc)
    assert s1.oacc != s2.oacc


@given(st.integers(1, 200), st.integers(1, 200),
       st.integers(0, 200), st.integers(0, 200))
def test_macc_identity_random(n_high, n_low, hh, hl):
    hit_high = min(hh, n_high)
    hit_low = min(hl, n_low)
    recs = records_from_counts(n_high, hit_high, n_low, hit_low)
    s = mean_accuracy(recs)
    assert s.macc == pytest.approx(
        0.5 * (hit_high / n_high + hit_low / n_low), abs=1e-12)
    assert s.oacc == pytest.approx(
        (hit_high + hit_low) / (n_high + n_low), abs=1e-12)
    assert s.n_total == n_high + n_low


# --- record construction -------------------------------------------------------

def test_make_record_argmax_and_tie():
    r = make_record("s", 0.3, 0.7, "high")
    assert r.predicted == "high"
    assert r.confidence == pytest.approx(0.7)
    r = make_record("s", 0.5, 0.5, "high")
    assert r.predicted == "low"  # exact tie goes low
    r = make_record("s", 0.8, 0.1, "low")
    assert r.predicted == "low"
    assert r.confidence == pytest.approx(0.8 / 0.9)


# --- guards ----------------------------------------------------------------------

def test_empty_and_missing_class():
    with pytest.raises(EmptyEval):
        summarize([])
    with pytest.raises(EmptyEval):
        overall_accuracy([])
    only_high = records_from_counts(5, 4, 0, 0)
    with pytest.raises(MissingClass) as exc:
        mean_accuracy(only_high)
    assert "low" in str(exc.value)
    s = summarize(only_high)  # tolerant path flags instead
    assert s.all_classes is False
    assert s.acc_low is None
    assert s.macc == 0.8


# --- per-patch table ---------------------------------------------------------------

def test_per_patch_table_sorting_and_best():
    model_a = (records_from_counts(4, 4, 4, 4, patch_id="p1")
               + records_from_counts(4, 1, 4, 1, patch_id="p2"))
    model_b = (records_from_counts(4, 2, 4, 2, patch_id="p1")
               + records_from_counts(4, 3, 4, 3, patch_id="p2"))
    rows = per_patch_table({"a": model_a, "b": model_b})
    assert [r.patch_id for r in rows] == ["p1", "p2"]  # by mean macc
    assert rows[0].macc == {"a": 1.0, "b": 0.5}
    assert rows[0].best == ("a",)
    assert rows[1].best == ("b",)
    assert rows[0].n == 8


def test_per_patch_table_tie_lists_both():
    model_a = records_from_counts(4, 3, 4, 3, patch_id="p1")
    model_b = records_from_counts(4, 3, 4, 3, patch_id="p1")
    rows = per_patch_table({"a": model_a, "b": model_b})
    assert rows[0].best == ("a", "b")


def test_per_patch_table_single_class_patch():
    rows = per_patch_table({"m": records_from_counts(6, 5, 0, 0,
                                                     patch_id="p9")})
    assert rows[0].macc["m"] == pytest.approx(5 / 6)
    assert rows[0].label == "high"


# --- grouped metrics -----------------------------------------------------------------

def test_grouped_metrics_by_year():
    recs = (records_from_counts(10, 9, 10, 8, year=2020)
            + records_from_counts(10, 5, 10, 5, year=2021))
    groups = grouped_metrics(recs, "year")
    assert sorted(groups) == [2020, 2021]
    assert groups[2020].macc == pytest.approx(0.85)
    assert groups[2021].macc == pytest.approx(0.5)
    # weighted recombination reproduces the overall accuracy
    total = summarize(recs)
    woacc = sum(g.oacc * g.n_total for g in groups.values()) / total.n_total
    assert woacc == pytest.approx(total.oacc)


def test_grouped_metrics_by_region_and_patch():
    recs = (records_from_counts(4, 4, 4, 4, region="west", patch_id="pa")
            + records_from_counts(4, 2, 4, 2, region="east", patch_id="pb"))
    by_region = grouped_metrics(recs, "region")
    assert set(by_region) == {"west", "east"}
    by_patch = grouped_metrics(recs, "patch")
    assert set(by_patch) == {"pa", "pb"}


def test_grouped_metrics_missing_attribute():
    recs = records_from_counts(2, 2, 2, 2)  # year defaults to 0
    with pytest.raises(MissingAttribute):
        grouped_metrics(recs, "year")
    with pytest.raises(MissingAttribute):
        grouped_metrics(recs, "region")
    with pytest.raises(MissingAttribute):
        grouped_metrics(recs, "nope")


def test_grouped_metrics_single_class_group_flagged():
    recs = (records_from_counts(5, 5, 0, 0, year=2020)
            + records_from_counts(5, 5, 5, 4, year=2021))
    groups = grouped_metrics(recs, "year")
    assert groups[2020].all_classes is False
    assert groups[2021].all_classes is True


# --- run statistics -----------------------------------------------------------------

def make_summary(macc, oacc=None):
    return MetricsSummary(oacc=oacc if oacc is not None else macc,
                          macc=macc, acc_high=macc, acc_low=macc,
                          n_total=10, n_high=5, n_low=5, all_classes=True)


def test_run_stats_mean_and_sample_std():
    stats = run_stats([make_summary(0.70), make_summary(0.72),
                       make_summary(0.74)])
    mean, std = stats["macc"]
    assert mean == pytest.approx(0.72)
    assert std == pytest.approx(0.02)  # sample std over {70, 72, 74}%


def test_run_stats_two_pass_oracle():
    vals = [0.61, 0.67, 0.63, 0.70, 0.66]
    stats = run_stats([make_summary(v) for v in vals])
    mean = sum(vals) / len(vals)
    var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
    assert stats["macc"] == pytest.approx((mean, var ** 0.5), abs=1e-15)


def test_run_stats_skips_none_fields():
    a = make_summary(0.7)
    b = make_summary(0.8)
    b.acc_low = None
    stats = run_stats([a, b])
    assert "acc_low" not in stats
    assert "macc" in stats


def test_run_stats_too_few():
    with pytest.raises(TooFewRuns):
        run_stats([make_summary(0.7)])
    with pytest.raises(TooFewRuns):
        run_stats([])


# --- percent formatting ----------------------------------------------------------------

def test_pct_half_up_cases():
    assert pct(0.7545) == "75.5"
    assert pct(0.694) == "69.4"
    assert pct(0.125) == "12.5"
    assert pct(0.12449) == "12.4"
    assert pct(0.5) == "50.0"
    assert pct(1.0) == "100.0"
    assert pct(0.0) == "0.0"
    # 0.005 -> 0.5%; a naive bankers round would say 0.4
    assert pct(0.005, decimals=1) == "0.5"
    assert pct(0.73456, decimals=2) == "73.46"
    assert pct(2 / 3) == "66.7"


def test_pct_binary_noise_boundary():
    # value computed in floats that sits a hair under x.x5
    v = (0.873 + 0.636) / 2  # 0.7545 but 0.75449999... in binary
    assert pct(v) == "75.5"
