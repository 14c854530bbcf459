"""End-to-end command-line pipeline on a miniature synthetic dataset."""

import contextlib
import csv
import io
import re

import pytest

from biovista.cli import main, read_predictions, write_predictions
from biovista.dataset import read_manifest

CONFIG = """
[dataset]
seed = 11
years = [2021]

[synth]
als_density = 0.05

[train]
epochs = 2
lr = 1e-3
"""


def run(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(argv)
    return code, buf.getvalue()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run every subcommand once over a shared temp tree."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = root / "cfg.toml"
    cfg.write_text(CONFIG)
    c = str(cfg)
    data, ds, ex, fit, ens, rep = (str(root / n) for n in
                                   ("data", "ds", "ex", "fit", "ens", "rep"))

    out = {}
    steps = [
        ("synth", ["synth", "--config", c, "--out", data]),
        ("build", ["build-dataset", "--config", c, "--out", ds,
                   "--hnv", f"{data}/hnv.tif"]),
        ("extract", ["extract", "--config", c, "--out", ex,
                     "--manifest", f"{data}/manifest.csv",
                     "--orthos", f"{data}/orthos",
                     "--tiles", f"{data}/tiles", "--jobs", "2"]),
        ("train", ["train-fusion", "--config", c, "--out", fit,
                   "--embeddings", f"{data}/embeddings.bvem",
                   "--manifest", f"{data}/manifest.csv"]),
        ("ensemble", ["ensemble", "--config", c, "--out", ens,
                      "--embeddings", f"{data}/embeddings.bvem",
                      "--manifest", f"{data}/manifest.csv"]),
        ("evaluate", ["evaluate", "--config", c, "--out", rep,
                      "--manifest", f"{data}/manifest.csv",
                      "--predictions", f"{ens}/predictions_ensemble.csv",
                      "--predictions", f"{fit}/predictions_fusion.csv"]),
    ]
    for name, argv in steps:
        code, text = run(argv)
        assert code == 0, f"{name} failed:\n{text}"
        out[name] = text
    return root, out


def test_synth_reports_counts(pipeline):
    root, out = pipeline
    m = re.match(r"synth: (\d+) patches, (\d+) samples, (\d+) tiles, "
                 r"(\d+) embedding records", out["synth"])
    assert m
    assert int(m.group(1)) == 8
    assert int(m.group(4)) == 2 * int(m.group(2))


def test_build_dataset_reproduces_synth_manifest(pipeline):
    root, _ = pipeline
    a = (root / "data" / "manifest.csv").read_bytes()
    b = (root / "ds" / "manifest.csv").read_bytes()
    assert a == b
    assert (root / "ds" / "patches.geojson").is_file()


def test_extract_writes_every_sample(pipeline):
    root, out = pipeline
    samples = read_manifest(root / "data" / "manifest.csv")
    assert f"extract: {len(samples)} of {len(samples)} samples" in out["extract"]
    for s in samples:
        png = root / "ex" / "images" / f"{s.sample_id}.png"
        xyz = root / "ex" / "clouds" / f"{s.sample_id}.xyz"
        las = root / "ex" / "clouds" / f"{s.sample_id}.las"
        assert png.is_file() and xyz.is_file() and las.is_file()
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_train_outputs(pipeline):
    root, out = pipeline
    assert (root / "fit" / "checkpoint.bvml").is_file()
    assert (root / "fit" / "training_curve.png").is_file()
    log = (root / "fit" / "training_log.csv").read_text().splitlines()
    assert log[0] == "epoch,train_loss,val_oacc,val_macc,val_acc_high,val_acc_low"
    assert len(log) == 3  # header + 2 epochs
    assert "best epoch" in out["train"]


def test_prediction_files_cover_test_split(pipeline):
    root, _ = pipeline
    samples = read_manifest(root / "data" / "manifest.csv")
    test_ids = [s.sample_id for s in samples if s.split == "test"]
    assert test_ids
    ens = read_predictions(root / "ens" / "predictions_ensemble.csv")
    assert set(ens) == {"2d", "3d", "ensemble"}
    for rows in ens.values():
        assert [r[0] for r in rows] == test_ids
        for _, p_low, p_high in rows:
            assert 0.0 <= p_low <= 1.0
            assert abs(p_low + p_high - 1.0) < 2e-6
    fus = read_predictions(root / "fit" / "predictions_fusion.csv")
    assert [r[0] for r in fus["fusion"]] == test_ids


def test_prediction_file_format(pipeline):
    root, _ = pipeline
    lines = (root / "fit" / "predictions_fusion.csv").read_text().splitlines()
    assert lines[0] == "sample_id,model,p_low,p_high"
    assert re.match(r"^[^,]+,fusion,\d\.\d{6},\d\.\d{6}$", lines[1])


def test_ensemble_weights_file(pipeline):
    root, out = pipeline
    lines = (root / "ens" / "ensemble_weights.csv").read_text().splitlines()
    assert lines[0] == "w_2d,w_3d,val_macc"
    w2, w3, macc = (float(v) for v in lines[1].split(","))
    assert abs(w2 + w3 - 1.0) < 1e-9
    assert 0.0 <= macc <= 1.0
    assert f"w_2d={w2:.2f}" in out["ensemble"]


def test_evaluate_tables_and_figures(pipeline):
    root, out = pipeline
    rep = root / "rep"
    assert (rep / "summary.md").is_file()
    assert (rep / "patches.md").is_file()
    assert (rep / "summary.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert (rep / "by_year.png").is_file()
    summary = (rep / "summary.md").read_text()
    for model in ("2d", "3d", "ensemble", "fusion"):
        assert f"| {model} |" in summary
        assert f"evaluate: {model}:" in out["evaluate"]
    by_year = list(rep.glob("by_year_*.md"))
    assert len(by_year) == 4  # one per model
    assert "| 2021 |" in by_year[0].read_text()


def test_evaluate_csv_format(pipeline, tmp_path):
    root, _ = pipeline
    code, _ = run(["evaluate", "--out", str(tmp_path),
                   "--manifest", str(root / "data" / "manifest.csv"),
                   "--predictions", str(root / "ens" / "predictions_ensemble.csv"),
                   "--format", "csv"])
    assert code == 0
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0] == "model,oacc,macc,acc_high,acc_low"
    assert len(summary) == 4


def test_evaluate_with_region_sidecar(pipeline, tmp_path):
    root, _ = pipeline
    samples = read_manifest(root / "data" / "manifest.csv")
    sidecar = tmp_path / "regions.csv"
    with open(sidecar, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patch_id", "region"])
        for pid in sorted({s.patch_id for s in samples}):
            w.writerow([pid, "west" if pid < "p4" else "east"])
    code, _ = run(["evaluate", "--out", str(tmp_path / "rep"),
                   "--manifest", str(root / "data" / "manifest.csv"),
                   "--predictions", str(root / "ens" / "predictions_ensemble.csv"),
                   "--regions", str(sidecar)])
    assert code == 0
    by_region = list((tmp_path / "rep").glob("by_region_*.md"))
    assert len(by_region) == 3
    assert (tmp_path / "rep" / "by_region.png").is_file()


def test_preview_augment(pipeline, tmp_path):
    root, _ = pipeline
    sid = read_manifest(root / "data" / "manifest.csv")[0].sample_id
    code, _ = run(["preview-augment", "--out", str(tmp_path),
                   "--image", str(root / "ex" / "images" / f"{sid}.png"),
                   "--cloud", str(root / "ex" / "clouds" / f"{sid}.xyz"),
                   "--count", "2", "--seed", "3"])
    assert code == 0
    for i in range(2):
        assert (tmp_path / f"augment_{i}.png").is_file()
        assert (tmp_path / f"augment_{i}.xyz").is_file()


def test_synth_seed_flag_changes_layout(pipeline, tmp_path):
    root, _ = pipeline
    code, _ = run(["synth", "--out", str(tmp_path), "--seed", "5"])
    assert code == 0
    a = (tmp_path / "manifest.csv").read_bytes()
    b = (root / "data" / "manifest.csv").read_bytes()
    assert a != b


# --- failure modes -----------------------------------------------------------

def test_missing_input_exits_2(tmp_path, capsys):
    code = main(["build-dataset", "--hnv", str(tmp_path / "nope.tif"),
                 "--out", str(tmp_path)])
    assert code == 2
    assert "error: MissingInput:" in capsys.readouterr().err


def test_unset_input_exits_2(tmp_path, capsys):
    code = main(["build-dataset", "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "error: MissingInput:" in err and "class raster" in err


def test_config_error_exits_1(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[trian]\nepochs = 1\n")
    code = main(["synth", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 1
    assert "error: ConfigError:" in capsys.readouterr().err


def test_corrupt_store_exits_3(pipeline, tmp_path, capsys):
    root, _ = pipeline
    bad = tmp_path / "bad.bvem"
    bad.write_bytes(b"NOPE" + bytes(14))  # full-size header, wrong magic
    code = main(["train-fusion", "--embeddings", str(bad),
                 "--manifest", str(root / "data" / "manifest.csv"),
                 "--out", str(tmp_path)])
    assert code == 3
    assert "error: BadMagic:" in capsys.readouterr().err


def test_evaluate_rejects_unknown_sample(pipeline, tmp_path, capsys):
    root, _ = pipeline
    pred = tmp_path / "p.csv"
    write_predictions([("ghost", "m", 0.5, 0.5)], pred)
    code = main(["evaluate", "--manifest", str(root / "data" / "manifest.csv"),
                 "--predictions", str(pred), "--out", str(tmp_path)])
    assert code == 1
    assert "not in the manifest" in capsys.readouterr().err


def test_evaluate_rejects_missing_columns(pipeline, tmp_path, capsys):
    root, _ = pipeline
    pred = tmp_path / "p.csv"
    pred.write_text("sample_id,prob\nx,0.5\n")
    code = main(["evaluate", "--manifest", str(root / "data" / "manifest.csv"),
                 "--predictions", str(pred), "--out", str(tmp_path)])
    assert code == 1
    assert "error: ValidationError:" in capsys.readouterr().err


def test_preview_augment_needs_an_input(tmp_path, capsys):
    code = main(["preview-augment", "--out", str(tmp_path)])
    assert code == 1
    assert "needs --image and/or --cloud" in capsys.readouterr().err
