#!/usr/bin/env python3
"""Convert a CSIQ layout to the score-manifest CSV.

Expected input:
    <root>/dst_imgs/<type>/<image>.<type>.<level>.png
    a DMOS table exported to CSV (the distribution ships an .xlsx; export
    it, or pass any CSV with columns: image, dst_type, dst_lev, dmos)

CSIQ DMOS is higher = worse, so records carry higher_is_better=false.
Distortion names are mapped onto the manifest vocabulary; types outside
the vocabulary (fnoise, contrast) are skipped with a note. Best effort.
"""

import argparse
import csv
import os
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qarest.dataio import MosDatabase, MosRecord, save_mos_manifest

CSIQ_TYPES = {
    "jpeg": ("jpeg", "jpeg"),
    "jpeg 2000": ("jpeg2000", "jpeg2000"),
    "jpeg2000": ("jpeg2000", "jpeg2000"),
    "jp2k": ("jpeg2000", "jpeg2000"),
    "blur": ("gaussian_blur", "blur"),
    "gaussian blur": ("gaussian_blur", "blur"),
    "awgn": ("white_noise", "awgn"),
    "noise": ("white_noise", "awgn"),
}


def pick(row: dict, *names: str) -> str:
    for name in names:
        for key, value in row.items():
            if key.strip().lower() == name:
                return value.strip()
    raise KeyError(names[0])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("root", help="CSIQ directory containing dst_imgs/")
    ap.add_argument("--scores", required=True, help="DMOS table as CSV")
    ap.add_argument("--out", required=True, help="output CSV path")
    args = ap.parse_args()

    root = Path(args.root)
    out_path = Path(args.out)
    out_dir = out_path.resolve().parent
    records = []
    skipped_types: set[str] = set()
    missing = 0
    with open(args.scores, newline="", encoding="utf-8-sig") as fh:
        for row in csv.DictReader(fh):
            try:
                image = pick(row, "image")
                dst_type = pick(row, "dst_type", "distortion").lower()
                level = pick(row, "dst_lev", "level")
                dmos = pick(row, "dmos", "dmos_std", "score")
            except KeyError as exc:
                print(f"error: scores file lacks a {exc} column", file=sys.stderr)
                return 1
            if dst_type not in CSIQ_TYPES:
                skipped_types.add(dst_type)
                continue
            distortion, suffix = CSIQ_TYPES[dst_type]
            img = root / "dst_imgs" / suffix / f"{image}.{suffix}.{int(float(level))}.png"
            if not img.is_file():
                missing += 1
                continue
            records.append(
                MosRecord(
                    image_path=os.path.relpath(img.resolve(), out_dir),
                    distortion_type=distortion,
                    level=float(level),
                    score=float(dmos),
                    higher_is_better=False,
                )
            )

    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_mos_manifest(MosDatabase(records=records, path=""), out_path)
    note = f"; skipped types outside the vocabulary: {sorted(skipped_types)}" if skipped_types else ""
    print(f"wrote {len(records)} records to {out_path} ({missing} image files missing{note})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
