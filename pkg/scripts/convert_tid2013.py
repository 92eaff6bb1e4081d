#!/usr/bin/env python3
"""Convert a TID2013 layout to the score-manifest CSV.

Expected input:
    <root>/distorted_images/iXX_YY_Z.bmp   (YY = distortion type, Z = level)
    <root>/mos_with_names.txt              lines: "<mos> <filename>"

TID2013 MOS is higher = better, so records carry higher_is_better=true.
Only distortion numbers with a manifest-vocabulary equivalent are kept:
01 additive gaussian noise, 08 gaussian blur, 10 jpeg, 11 jpeg2000.
Best effort.
"""

import argparse
import os
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qarest.dataio import MosDatabase, MosRecord, save_mos_manifest

TID_TYPES = {
    1: "white_noise",
    8: "gaussian_blur",
    10: "jpeg",
    11: "jpeg2000",
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("root", help="TID2013 directory")
    ap.add_argument("--out", required=True, help="output CSV path")
    args = ap.parse_args()

    root = Path(args.root)
    mos_file = root / "mos_with_names.txt"
    if not mos_file.is_file():
        print(f"error: {mos_file} not found", file=sys.stderr)
        return 1

    out_path = Path(args.out)
    out_dir = out_path.resolve().parent
    records = []
    missing = 0
    skipped = 0
    for lineno, line in enumerate(mos_file.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            score_text, name = line.split(None, 1)
            score = float(score_text)
        except ValueError:
            print(f"warning: line {lineno}: unparseable row {line!r}", file=sys.stderr)
            continue
        stem = Path(name.strip()).stem  # iXX_YY_Z
        parts = stem.split("_")
        if len(parts) != 3:
            print(f"warning: line {lineno}: unexpected name {name!r}", file=sys.stderr)
            continue
        try:
            dist_num = int(parts[1])
            level = float(parts[2])
        except ValueError:
            print(f"warning: line {lineno}: unexpected name {name!r}", file=sys.stderr)
            continue
        if dist_num not in TID_TYPES:
            skipped += 1
            continue
        img = root / "distorted_images" / name.strip()
        if not img.is_file():
            missing += 1
            continue
        records.append(
            MosRecord(
                image_path=os.path.relpath(img.resolve(), out_dir),
                distortion_type=TID_TYPES[dist_num],
                level=level,
                score=score,
                higher_is_better=True,
            )
        )

    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_mos_manifest(MosDatabase(records=records, path=""), out_path)
    print(
        f"wrote {len(records)} records to {out_path} "
        f"({skipped} rows outside the distortion vocabulary, {missing} image files missing)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
