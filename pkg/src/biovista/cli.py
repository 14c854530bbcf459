"""Command-line entry point: the pipeline as subcommands.

    synth          emit a miniature synthetic dataset tree
    build-dataset  class raster -> patches + sample manifest
    extract        manifest -> per-sample plot images and point clouds
    train-fusion   embedding store -> fusion head checkpoint + log
    ensemble       embedding store -> searched weights + predictions
    evaluate       prediction files -> report tables and figures
    preview-augment  dump augmented variants of one extracted sample

All subcommands read the same TOML config; flags override file values.
Exit codes: 0 success, 1 validation failure, 2 missing input, 3 data
error.  Errors print as `error: <Name>: <detail>` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import embeddings as emb
from . import fusion
from . import metrics
from . import report
from .augment import augment_cloud, augment_image
from .config import load_config, override
from .core import class_index
from .errors import BioVistaError, MissingInput, ValidationError
from .raster_io import read_gtiff
from .rng import Rng
from .synth import synth_dataset


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need(value: str | None, what: str) -> str:
    if not value:
        raise MissingInput("<unset>", what)
    return value


def _path_arg(value: str | None, what: str) -> Path:
    p = Path(_need(value, what))
    if not p.exists():
        raise MissingInput(str(p), what)
    return p


# --- prediction files -------------------------------------------------------

def write_predictions(rows: list[tuple[str, str, float, float]],
                      path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "model", "p_low", "p_high"])
        for sid, model, p_low, p_high in rows:
            w.writerow([sid, model, f"{p_low:.6f}", f"{p_high:.6f}"])


def read_predictions(path: Path) -> dict[str, list[tuple[str, float, float]]]:
    """model -> ordered (sample_id, p_low, p_high) rows."""
    out: dict[str, list[tuple[str, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"sample_id", "model", "p_low", "p_high"}
        if reader.fieldnames is None or not need.issubset(reader.fieldnames):
            raise ValidationError(
                f"{path}: predictions need columns {sorted(need)}")
        for row in reader:
            out.setdefault(row["model"], []).append(
                (row["sample_id"], float(row["p_low"]), float(row["p_high"])))
    return out


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.synth.seed = args.seed
        cfg.dataset.seed = args.seed
    out = _out_dir(args, cfg)
    counts = synth_dataset(cfg.synth, cfg.dataset, out)
    print(f"synth: {counts['patches']} patches, {counts['samples']} samples, "
          f"{counts['tiles']} tiles, {counts['embeddings']} embedding records "
          f"-> {out}")
    return 0


def cmd_build_dataset(args) -> int:
    cfg = load_config(args.config)
    override(cfg.dataset, seed=args.seed)
    hnv = _path_arg(args.hnv or cfg.paths.hnv, "class raster")
    out = _out_dir(args, cfg)
    raster = read_gtiff(hnv)
    patches, samples = ds.build_manifest(raster, cfg.dataset)
    counts = Counter(s.patch_id for s in samples)
    ds.write_manifest(samples, out / "manifest.csv")
    ds.write_patch_geojson(patches, counts, out / "patches.geojson")
    by_split = Counter(s.split for s in samples)
    print(f"build-dataset: {len(patches)} patches, {len(samples)} samples "
          f"(train {by_split.get('train', 0)}, val {by_split.get('val', 0)}, "
          f"test {by_split.get('test', 0)}) -> {out}")
    return 0


def cmd_extract(args) -> int:
    cfg = load_config(args.config)
    manifest = _path_arg(args.manifest or cfg.paths.manifest, "manifest")
    orthos = _path_arg(args.orthos or cfg.paths.orthos, "orthophoto dir")
    tiles = _path_arg(args.tiles or cfg.paths.tiles, "tile dir")
    out = _out_dir(args, cfg)
    samples = ds.read_manifest(manifest)
    if args.split:
        wanted = set(args.split.split(","))
        samples = [s for s in samples if s.split in wanted]
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    failures = ds.extract_all(samples, orthos, tiles, out, cfg.dataset,
                              jobs=jobs)
    for sid, reason in failures:
        print(f"extract failed: {sid}: {reason}", file=sys.stderr)
    print(f"extract: {len(samples) - len(failures)} of {len(samples)} "
          f"samples -> {out}")
    return 0


def _split_arrays(store: emb.EmbeddingStore, samples: list[ds.Sample],
                  instance: int, split: str
                  ) -> tuple[list[str], np.ndarray, np.ndarray]:
    rows = emb.join_modalities(
        store, [s for s in samples if s.split == split], instance)
    ids = [r[0] for r in rows]
    if rows:
        x = np.stack([r[1] for r in rows]).astype(np.float64)
    else:
        x = np.empty((0, 2 * store.dim))
    y = np.array([class_index(r[2]) for r in rows], dtype=np.int64)
    return ids, x, y


def cmd_train_fusion(args) -> int:
    cfg = load_config(args.config)
    override(cfg.train, epochs=args.epochs, batch_size=args.batch_size,
             lr=args.lr, label_smoothing=args.label_smoothing,
             seed=args.seed, instance=args.instance)
    store = emb.read_store(_path_arg(args.embeddings or cfg.paths.embeddings,
                                     "embedding store"))
    samples = ds.read_manifest(
        _path_arg(args.manifest or cfg.paths.manifest, "manifest"))
    out = _out_dir(args, cfg)
    inst = cfg.train.instance
    _, x_train, y_train = _split_arrays(store, samples, inst, "train")
    _, x_val, y_val = _split_arrays(store, samples, inst, "val")
    params, log = fusion.train_fusion(x_train, y_train, x_val, y_val,
                                      cfg.train)
    fusion.save_params(params, out / "checkpoint.bvml")
    fusion.write_training_log(log, out / "training_log.csv")
    if log:
        report.fig_training_curve(log, out / "training_curve.png")
        best = max(log, key=lambda r: r.val_macc)
        print(f"train-fusion: best epoch {best.epoch}, "
              f"val MAcc {100 * best.val_macc:.1f}% -> {out}")
    else:
        print(f"train-fusion: epochs=0, wrote initialised checkpoint -> {out}")
    test_ids, x_test, _ = _split_arrays(store, samples, inst, "test")
    if test_ids:
        rows = []
        for i in range(0, len(test_ids), 512):
            probs = fusion.predict_fusion(params, x_test[i:i + 512])
            probs = np.atleast_2d(probs)
            for sid, p in zip(test_ids[i:i + 512], probs):
                rows.append((sid, "fusion", float(p[0]), float(p[1])))
        write_predictions(rows, out / "predictions_fusion.csv")
    return 0


def _modality_probs(store: emb.EmbeddingStore, samples: list[ds.Sample],
                    split: str) -> tuple[list[ds.Sample], np.ndarray, np.ndarray]:
    subset = [s for s in samples if s.split == split]
    p2d = np.array([emb.average_instances(store, s.sample_id, emb.MOD_2D)
                    for s in subset], dtype=np.float64).reshape(-1, 2)
    p3d = np.array([emb.average_instances(store, s.sample_id, emb.MOD_3D)
                    for s in subset], dtype=np.float64).reshape(-1, 2)
    return subset, p2d, p3d


def cmd_ensemble(args) -> int:
    cfg = load_config(args.config)
    store = emb.read_store(_path_arg(args.embeddings or cfg.paths.embeddings,
                                     "embedding store"))
    samples = ds.read_manifest(
        _path_arg(args.manifest or cfg.paths.manifest, "manifest"))
    out = _out_dir(args, cfg)
    val, v2d, v3d = _modality_probs(store, samples, "val")
    labels = np.array([class_index(s.label) for s in val], dtype=np.int64)
    w_2d, val_macc = fusion.search_weights(v2d, v3d, labels)
    (out / "ensemble_weights.csv").write_text(
        "w_2d,w_3d,val_macc\n"
        f"{w_2d:.2f},{1.0 - w_2d:.2f},{val_macc:.6f}\n")
    test, t2d, t3d = _modality_probs(store, samples, "test")
    mix = fusion.ensemble_probs(t2d, t3d, w_2d)
    rows = []
    for name, probs in (("2d", t2d), ("3d", t3d), ("ensemble", mix)):
        for s, p in zip(test, probs):
            rows.append((s.sample_id, name, float(p[0]), float(p[1])))
    write_predictions(rows, out / "predictions_ensemble.csv")
    print(f"ensemble: w_2d={w_2d:.2f}, val MAcc {100 * val_macc:.1f}%, "
          f"{len(test)} test samples -> {out}")
    return 0


def _read_regions(path: Path) -> tuple[str, dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or [])
        if "region" not in cols or not ({"sample_id", "patch_id"} & cols):
            raise ValidationError(
                f"{path}: region sidecar needs a region column plus "
                "sample_id or patch_id")
        key = "sample_id" if "sample_id" in cols else "patch_id"
        return key, {row[key]: row["region"] for row in reader}


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    samples = ds.read_manifest(
        _path_arg(args.manifest or cfg.paths.manifest, "manifest"))
    by_id = {s.sample_id: s for s in samples}
    region_key, regions = (None, {})
    if args.regions:
        region_key, regions = _read_regions(_path_arg(args.regions,
                                                      "region sidecar"))
    records_by_run: dict[str, list[list[metrics.EvalRecord]]] = {}
    for pred_path in args.predictions:
        per_model = read_predictions(_path_arg(pred_path, "predictions"))
        for model, rows in per_model.items():
            records = []
            for sid, p_low, p_high in rows:
                s = by_id.get(sid)
                if s is None:
                    raise ValidationError(
                        f"{pred_path}: sample {sid!r} is not in the manifest")
                region = None
                if region_key == "sample_id":
                    region = regions.get(sid)
                elif region_key == "patch_id":
                    region = regions.get(s.patch_id)
                records.append(metrics.make_record(
                    sid, p_low, p_high, s.label, patch_id=s.patch_id,
                    year=s.year, region=region))
            records_by_run.setdefault(model, []).append(records)
    if not records_by_run:
        raise ValidationError("no prediction rows to evaluate")
    out = _out_dir(args, cfg)
    written = report.write_report(records_by_run, out, fmt=args.format)
    for model, runs in records_by_run.items():
        s = metrics.summarize(runs[0])
        extra = f" ({len(runs)} runs)" if len(runs) > 1 else ""
        print(f"evaluate: {model}{extra}: OAcc {metrics.pct(s.oacc)}%, "
              f"MAcc {metrics.pct(s.macc)}%")
    print(f"evaluate: wrote {len(written)} files -> {out}")
    return 0


def cmd_preview_augment(args) -> int:
    from PIL import Image

    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else cfg.dataset.seed
    if args.image:
        img = np.asarray(Image.open(_path_arg(args.image, "plot image")))
        for i in range(args.count):
            rng = Rng.stream(seed, f"preview2d:{i}")
            aug = augment_image(img, cfg.augment2d, rng)
            Image.fromarray(aug).save(out / f"augment_{i}.png")
    if args.cloud:
        pts = np.loadtxt(_path_arg(args.cloud, "plot cloud"), ndmin=2)
        for i in range(args.count):
            rng = Rng.stream(seed, f"preview3d:{i}")
            aug = augment_cloud(pts[:, :3], cfg.augment3d, rng)
            ds.write_xyz(aug, out / f"augment_{i}.xyz")
    if not args.image and not args.cloud:
        raise ValidationError("preview-augment needs --image and/or --cloud")
    print(f"preview-augment: {args.count} variants -> {out}")
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biovista",
        description="Paired orthophoto / laser plot dataset tools and "
                    "multi-modal fusion for biodiversity potential.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the seed")

    p = sub.add_parser("synth", help="generate a synthetic dataset tree")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-dataset",
                       help="build patches and the sample manifest")
    common(p)
    p.add_argument("--hnv", help="class score raster (GeoTIFF)")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("extract", help="extract plot images and clouds")
    common(p)
    p.add_argument("--manifest", help="manifest CSV")
    p.add_argument("--orthos", help="orthophoto directory (<year>.tif)")
    p.add_argument("--tiles", help="laser tile directory")
    p.add_argument("--split", help="comma list of splits to extract")
    p.add_argument("--jobs", type=int, help="parallel workers (default: cores)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-fusion", help="train the fusion head")
    common(p)
    p.add_argument("--embeddings", help="embedding store (.bvem)")
    p.add_argument("--manifest", help="manifest CSV")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--label-smoothing", type=float, dest="label_smoothing")
    p.add_argument("--instance", type=int)
    p.set_defaults(func=cmd_train_fusion)

    p = sub.add_parser("ensemble", help="search ensemble weights on val")
    common(p)
    p.add_argument("--embeddings", help="embedding store (.bvem)")
    p.add_argument("--manifest", help="manifest CSV")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("evaluate", help="render report tables and figures")
    common(p)
    p.add_argument("--manifest", help="manifest CSV")
    p.add_argument("--predictions", action="append", required=True,
                   help="predictions CSV (repeat for multiple runs)")
    p.add_argument("--regions", help="region sidecar CSV")
    p.add_argument("--format", choices=("md", "csv"), default="md")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("preview-augment",
                       help="write augmented variants of one sample")
    common(p)
    p.add_argument("--image", help="extracted plot PNG")
    p.add_argument("--cloud", help="extracted plot .xyz")
    p.add_argument("--count", type=int, default=4)
    p.set_defaults(func=cmd_preview_augment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BioVistaError as exc:
        print(f"error: {exc.name}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
