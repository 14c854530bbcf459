"""Command line: `bv-adapter export` writes an embedding store.

Exit codes: 0 success, 1 validation/checkpoint error, 2 missing input,
4 when some samples failed (the store is still written for the rest).
"""

from __future__ import annotations

import argparse
import sys

from .errors import AdapterError
from .export import AdapterConfig, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bv-adapter",
        description="Run backbone checkpoints over extracted plot samples "
                    "and export embeddings to a .bvem store.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="write a .bvem embedding store")
    p.add_argument("--manifest", required=True, help="sample manifest CSV")
    p.add_argument("--out", required=True, help="output .bvem path")
    p.add_argument("--images", help="extracted plot image dir (<id>.png)")
    p.add_argument("--clouds", help="extracted plot cloud dir (<id>.xyz)")
    p.add_argument("--backbone-2d", default="stub",
                   help='checkpoint path or "stub"')
    p.add_argument("--backbone-3d", default="stub",
                   help='checkpoint path or "stub"')
    p.add_argument("--instance", type=int, default=0,
                   help="instance index stored on every record")
    p.add_argument("--split", help="comma list of splits to export")
    p.add_argument("--batch-size", type=int, default=32)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = AdapterConfig(
        manifest=args.manifest, out=args.out,
        images_dir=args.images, clouds_dir=args.clouds,
        backbone_2d=args.backbone_2d, backbone_3d=args.backbone_3d,
        instance=args.instance, batch_size=args.batch_size,
        splits=tuple(args.split.split(",")) if args.split else ())
    try:
        summary = export_embeddings(cfg)
    except AdapterError as exc:
        print(f"error: {exc.name}: {exc}", file=sys.stderr)
        return exc.exit_code
    for sid, modality, reason in summary["failures"]:
        print(f"export failed: {sid} ({modality}): {reason}",
              file=sys.stderr)
    print(f"export: {summary['records']} records for "
          f"{summary['samples']} samples -> {cfg.out}")
    return 4 if summary["failures"] else 0


if __name__ == "__main__":
    sys.exit(main())
