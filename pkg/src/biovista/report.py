"""Report rendering: delimited tables plus companion figures.

Tables come out as Markdown or CSV with percentages at one decimal
(half-up).  Figures are written as PNG next to the tables: a model
summary bar chart, per-group class accuracies, and training curves.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import (
    EvalRecord,
    MetricsSummary,
    PatchRow,
    grouped_metrics,
    pct,
    per_patch_table,
    run_stats,
    summarize,
)

_SUMMARY_COLS = ("oacc", "macc", "acc_high", "acc_low")
_COL_TITLES = {"oacc": "OAcc (%)", "macc": "MAcc (%)",
               "acc_high": "Acc high (%)", "acc_low": "Acc low (%)"}


def _fmt_cell(value: float | None) -> str:
    return "-" if value is None else pct(value)


def _summary_cells(runs: list[MetricsSummary]) -> dict[str, str]:
    if len(runs) == 1:
        s = runs[0]
        return {c: _fmt_cell(getattr(s, c)) for c in _SUMMARY_COLS}
    stats = run_stats(runs)
    out = {}
    for c in _SUMMARY_COLS:
        if c in stats:
            mean, std = stats[c]
            out[c] = f"{pct(mean)} ± {pct(std)}"
        else:
            out[c] = "-"
    return out


def summary_table(models: dict[str, list[MetricsSummary]],
                  fmt: str = "md") -> str:
    """One row per model; multi-run inputs show mean ± sample std."""
    rows = [(name, _summary_cells(runs)) for name, runs in models.items()]
    if fmt == "csv":
        lines = ["model," + ",".join(_SUMMARY_COLS)]
        for name, cells in rows:
            lines.append(name + "," + ",".join(cells[c] for c in _SUMMARY_COLS))
        return "\n".join(lines) + "\n"
    header = "| Model | " + " | ".join(_COL_TITLES[c] for c in _SUMMARY_COLS) + " |"
    sep = "|---" * (len(_SUMMARY_COLS) + 1) + "|"
    lines = [header, sep]
    for name, cells in rows:
        lines.append("| " + name + " | "
                     + " | ".join(cells[c] for c in _SUMMARY_COLS) + " |")
    return "\n".join(lines) + "\n"


def patch_table(rows: list[PatchRow], models: list[str],
                fmt: str = "md") -> str:
    """Per-patch mean accuracies; the best model per row is highlighted."""
    if fmt == "csv":
        lines = ["patch_id,label,n," + ",".join(models) + ",best"]
        for r in rows:
            cells = [pct(r.macc[m]) if m in r.macc else "-" for m in models]
            lines.append(f"{r.patch_id},{r.label},{r.n},"
                         + ",".join(cells) + "," + ";".join(r.best))
        return "\n".join(lines) + "\n"
    header = "| Patch | Label | n | " + " | ".join(models) + " |"
    sep = "|---" * (len(models) + 3) + "|"
    lines = [header, sep]
    for r in rows:
        cells = []
        for m in models:
            if m not in r.macc:
                cells.append("-")
            elif m in r.best:
                cells.append(f"**{pct(r.macc[m])}**")
            else:
                cells.append(pct(r.macc[m]))
        lines.append(f"| {r.patch_id} | {r.label} | {r.n} | "
                     + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def grouped_table(groups: dict, fmt: str = "md", key_name: str = "group") -> str:
    if fmt == "csv":
        lines = [f"{key_name},n,oacc,macc,acc_high,acc_low,all_classes"]
        for k, s in groups.items():
            lines.append(f"{k},{s.n_total},{pct(s.oacc)},{pct(s.macc)},"
                         f"{_fmt_cell(s.acc_high)},{_fmt_cell(s.acc_low)},"
                         f"{'yes' if s.all_classes else 'no'}")
        return "\n".join(lines) + "\n"
    lines = [f"| {key_name.title()} | n | OAcc (%) | MAcc (%) | "
             "Acc high (%) | Acc low (%) |",
             "|---|---|---|---|---|---|"]
    for k, s in groups.items():
        macc = pct(s.macc) + ("" if s.all_classes else " (one class)")
        lines.append(f"| {k} | {s.n_total} | {pct(s.oacc)} | {macc} | "
                     f"{_fmt_cell(s.acc_high)} | {_fmt_cell(s.acc_low)} |")
    return "\n".join(lines) + "\n"


# --- figures ---------------------------------------------------------------

def fig_model_summary(models: dict[str, list[MetricsSummary]],
                      path: str | Path) -> None:
    """Grouped bars: per-class accuracies and MAcc per model."""
    names = list(models)
    metrics = ["acc_high", "acc_low", "macc"]
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(names), 4.0))
    width = 0.25
    for j, metric in enumerate(metrics):
        xs, heights = [], []
        for i, name in enumerate(names):
            vals = [getattr(s, metric) for s in models[name]
                    if getattr(s, metric) is not None]
            if not vals:
                continue
            xs.append(i + (j - 1) * width)
            heights.append(100.0 * sum(vals) / len(vals))
        ax.bar(xs, heights, width=width, label=_COL_TITLES[metric].split(" (")[0])
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=15, ha="right")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_group_accuracy(records_by_model: dict[str, list[EvalRecord]],
                       key: str, path: str | Path) -> None:
    """Per-group class accuracies, one panel per class, bars per model."""
    per_model_groups = {m: grouped_metrics(r, key)
                        for m, r in records_by_model.items()}
    keys = sorted({k for g in per_model_groups.values() for k in g}, key=str)
    models = list(records_by_model)
    fig, axes = plt.subplots(2, 1, figsize=(1.8 + 0.9 * len(keys), 6.0),
                             sharex=True)
    for ax, (metric, title) in zip(
            axes, [("acc_high", "high class"), ("acc_low", "low class")]):
        width = 0.8 / max(1, len(models))
        for j, m in enumerate(models):
            xs, hs = [], []
            for i, k in enumerate(keys):
                s = per_model_groups[m].get(k)
                v = getattr(s, metric) if s else None
                if v is not None:
                    xs.append(i + (j - (len(models) - 1) / 2) * width)
                    hs.append(100.0 * v)
            ax.bar(xs, hs, width=width, label=m)
        ax.set_ylabel(f"accuracy, {title} (%)")
        ax.set_ylim(0, 100)
        ax.grid(axis="y", alpha=0.3)
    axes[0].legend(fontsize=8)
    axes[1].set_xticks(range(len(keys)))
    axes[1].set_xticklabels([str(k) for k in keys], rotation=30, ha="right")
    axes[1].set_xlabel(key)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_training_curve(log, path: str | Path) -> None:
    """Training loss and validation balanced accuracy per epoch."""
    epochs = [row.epoch for row in log]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(epochs, [row.train_loss for row in log],
             color="tab:red", marker="o", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss", color="tab:red")
    ax2 = ax1.twinx()
    ax2.plot(epochs, [100.0 * row.val_macc for row in log],
             color="tab:blue", marker="s", label="val MAcc")
    ax2.set_ylabel("val MAcc (%)", color="tab:blue")
    ax2.set_ylim(0, 100)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# --- orchestration ----------------------------------------------------------

def write_report(records_by_run: dict[str, list[list[EvalRecord]]],
                 out_dir: str | Path, fmt: str = "md") -> list[Path]:
    """Render every table and figure for a set of evaluated models.

    records_by_run maps model name to one record list per run.  Tables
    summarise across runs; per-patch and per-group breakdowns use the
    first run of each model.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = "md" if fmt == "md" else "csv"
    written = []

    summaries = {m: [summarize(run) for run in runs]
                 for m, runs in records_by_run.items()}
    p = out_dir / f"summary.{ext}"
    p.write_text(summary_table(summaries, fmt))
    written.append(p)

    first_run = {m: runs[0] for m, runs in records_by_run.items()}
    rows = per_patch_table(first_run)
    p = out_dir / f"patches.{ext}"
    p.write_text(patch_table(rows, list(first_run), fmt))
    written.append(p)

    sample_records = next(iter(first_run.values()))
    group_keys = ["year"]
    if all(r.region for r in sample_records):
        group_keys.append("region")
    for m, records in first_run.items():
        for key in group_keys:
            groups = grouped_metrics(records, key)
            p = out_dir / f"by_{key}_{_slug(m)}.{ext}"
            p.write_text(grouped_table(groups, fmt, key_name=key))
            written.append(p)

    fig_model_summary(summaries, out_dir / "summary.png")
    written.append(out_dir / "summary.png")
    for key in group_keys:
        fig_group_accuracy(first_run, key, out_dir / f"by_{key}.png")
        written.append(out_dir / f"by_{key}.png")
    return written


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in name.lower())
