#!/usr/bin/env python3
"""Convert the LIVE-IQA (release 2) layout to the score-manifest CSV.

Expected input directory:
    <root>/jp2k/img*.bmp, jpeg/, wn/, gblur/, fastfading/
    <root>/dmos.mat          variables: dmos (1xN), orgs (1xN)
    <root>/refnames_all.mat  variable: refnames_all (1xN cell)

DMOS is a difference mean opinion score (higher = worse), so records are
written with higher_is_better=false. Rows flagged as originals in ``orgs``
are emitted as distortion "pristine" only when --include-pristine is set.

Requires scipy (for .mat parsing). Best effort: verify counts against the
published database before trusting the output.
"""

import argparse
import os
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qarest.dataio import MosDatabase, MosRecord, save_mos_manifest

# subdirectory -> (record count, manifest distortion name)
LIVE_SECTIONS = [
    ("jp2k", 227, "jpeg2000"),
    ("jpeg", 233, "jpeg"),
    ("wn", 174, "white_noise"),
    ("gblur", 174, "gaussian_blur"),
    ("fastfading", 174, "fast_fading"),
]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("root", help="LIVE-IQA release-2 directory")
    ap.add_argument("--out", required=True, help="output CSV path")
    ap.add_argument("--include-pristine", action="store_true", help="keep rows flagged as originals")
    args = ap.parse_args()

    try:
        from scipy.io import loadmat
    except ImportError:
        print("error: scipy is required to read LIVE-IQA .mat files", file=sys.stderr)
        return 1

    root = Path(args.root)
    dmos_file = root / "dmos.mat"
    if not dmos_file.is_file():
        print(f"error: {dmos_file} not found", file=sys.stderr)
        return 1
    mat = loadmat(dmos_file)
    dmos = mat["dmos"].ravel()
    orgs = mat["orgs"].ravel()
    expected = sum(n for _, n, _ in LIVE_SECTIONS)
    if dmos.size != expected:
        print(f"error: dmos has {dmos.size} entries, expected {expected}", file=sys.stderr)
        return 1

    out_path = Path(args.out)
    out_dir = out_path.resolve().parent
    records = []
    index = 0
    missing = 0
    for subdir, count, distortion in LIVE_SECTIONS:
        for i in range(1, count + 1):
            score = float(dmos[index])
            is_org = bool(orgs[index])
            index += 1
            img = root / subdir / f"img{i}.bmp"
            if not img.is_file():
                missing += 1
                continue
            if is_org and not args.include_pristine:
                continue
            records.append(
                MosRecord(
                    image_path=os.path.relpath(img.resolve(), out_dir),
                    distortion_type="pristine" if is_org else distortion,
                    level=None,
                    score=score,
                    higher_is_better=False,
                )
            )

    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_mos_manifest(MosDatabase(records=records, path=""), out_path)
    print(f"wrote {len(records)} records to {out_path} ({missing} image files missing)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
