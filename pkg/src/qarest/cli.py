"""Command line front end.

Subcommands: train, restore, assess, eval-restoration, eval-iqa, metrics.
Exit code 0 on success; failures print ``error[<Category>]: <message>`` to
stderr and exit nonzero. Commands that write artifacts drop a run.json
provenance record in the output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench, ckpt, trainer
from .dataio import IMAGE_EXTENSIONS, CorpusManifest, load_image, load_mos_manifest, save_image
from .errors import InputError, QarestError
from .metrics import PoolingSpec, psnr, psnr_b, ssim_eval


def _input_images(path_arg: str) -> list[Path]:
    path = Path(path_arg)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
        if not files:
            raise InputError(f"no image files under {path}")
        return files
    if path.is_file():
        return [path]
    raise InputError(f"input path does not exist: {path}")


def _load_model(ckpt_dir: str):
    model, meta = trainer.load_model(ckpt_dir)
    return model, ckpt.checkpoint_id(ckpt_dir)


def cmd_train(args: argparse.Namespace) -> int:
    run = trainer.RunConfig.from_json(args.config)
    result = trainer.fit(run, resume_from=args.resume)
    print(f"trained {result.steps_run} steps; final checkpoint: {result.final_checkpoint}")
    print(f"loss {result.initial_loss:.4f} -> {result.final_loss:.4f}; logs under {result.out_dir}")
    return 0


def cmd_restore(args: argparse.Namespace) -> int:
    model, ckpt_id = _load_model(args.ckpt)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = _input_images(args.input)
    for src in inputs:
        restored = bench.restore_image(model, load_image(src))
        dst = out_dir / f"{src.stem}_restored.png"
        save_image(dst, restored)
        print(f"{src} -> {dst}")
    bench.write_run_provenance(out_dir, "restore", {"input": args.input, "count": len(inputs)}, ckpt_id)
    return 0


def cmd_assess(args: argparse.Namespace) -> int:
    model, _ = _load_model(args.ckpt)
    spec = PoolingSpec(p=args.p, map_index=args.map)
    for src in _input_images(args.input):
        est = bench.predict_quality(model, load_image(src), spec, image_id=str(src))
        print(f"{src}\tQ{spec.map_index}(p={spec.p:g}) = {est.q:.6f}")
    return 0


def cmd_eval_restoration(args: argparse.Namespace) -> int:
    model, ckpt_id = _load_model(args.ckpt)
    manifest = CorpusManifest.load(args.corpus)
    qf_list = [int(tok) for tok in args.qfs.split(",") if tok.strip()]
    report = bench.eval_restoration(
        model, manifest, qf_list=qf_list, split=args.split, channel_mode=args.channel_mode, checkpoint_id=ckpt_id
    )
    written = bench.emit_reports(report, args.out)
    bench.write_run_provenance(
        args.out, "eval-restoration", {"corpus": args.corpus, "qfs": qf_list, "split": args.split}, ckpt_id
    )
    for row in report.rows:
        print(
            f"qf {row.qf}: psnr {row.compressed_psnr:.3f} -> {row.restored_psnr:.3f}, "
            f"ssim {row.compressed_ssim:.4f} -> {row.restored_ssim:.4f}, "
            f"psnr_b {row.compressed_psnr_b:.3f} -> {row.restored_psnr_b:.3f} (n={row.count})"
        )
    print(f"reports: {', '.join(str(p) for p in written)}")
    return 0


def cmd_eval_iqa(args: argparse.Namespace) -> int:
    model, ckpt_id = _load_model(args.ckpt)
    db = load_mos_manifest(args.mos)
    spec = PoolingSpec(p=args.p, map_index=args.map)
    report = bench.eval_iqa(model, db, spec, distortion=args.distortion, checkpoint_id=ckpt_id)
    written = bench.emit_reports(report, args.out)
    bench.write_run_provenance(
        args.out, "eval-iqa", {"mos": args.mos, "distortion": args.distortion, "map": args.map, "p": args.p}, ckpt_id
    )
    for row in report.rows:
        print(f"{row.database}/{row.distortion}: pcc {row.pcc:.4f} srcc {row.srcc:.4f} kcc {row.kcc:.4f} (n={row.n})")
    print(f"reports: {', '.join(str(p) for p in written)}")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    ref = load_image(args.ref)
    test = load_image(args.test)
    values = {
        "psnr": psnr(ref, test),
        "ssim": ssim_eval(ref, test, args.channel_mode),
        "psnr_b": psnr_b(ref, test),
    }
    print(json.dumps(values, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qarest", description="JPEG restoration with gate-map quality assessment")
    parser.add_argument("-v", "--verbose", action="store_true", help="enable info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run or resume a training job")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--resume", default=None, help="checkpoint directory to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("restore", help="restore compressed images")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("assess", help="print pooled quality estimates")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--map", type=int, default=2, choices=(1, 2, 3), help="quality map index")
    p.add_argument("--p", type=float, default=2.0, help="Minkowski pooling exponent")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("eval-restoration", help="benchmark restoration over a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True, help="corpus manifest JSON")
    p.add_argument("--qfs", default="10,20,30,40", help="comma-separated JPEG quality factors")
    p.add_argument("--split", default=None, choices=("train", "val", "test"), help="restrict to one split")
    p.add_argument("--channel-mode", default="rgb_mean", choices=("rgb_mean", "luma_bt601"))
    p.add_argument("--out", required=True, help="report output directory")
    p.set_defaults(func=cmd_eval_restoration)

    p = sub.add_parser("eval-iqa", help="correlate pooled quality with subjective scores")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--mos", required=True, help="subjective score CSV")
    p.add_argument("--distortion", default=None, help="restrict to one distortion type")
    p.add_argument("--map", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--out", required=True, help="report output directory")
    p.set_defaults(func=cmd_eval_iqa)

    p = sub.add_parser("metrics", help="print psnr/ssim/psnr_b for an image pair")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--channel-mode", default="rgb_mean", choices=("rgb_mean", "luma_bt601"))
    p.set_defaults(func=cmd_metrics)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except QarestError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[OSError]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
