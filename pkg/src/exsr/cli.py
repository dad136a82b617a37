"""Command-line entry points.

    exsr make-data   --out DIR [--identities N] [--images M] [--size S]
    exsr train       --config FILE [--resume CKPT] [--no-critic] [--seed S]
    exsr eval        --manifest FILE --scale N [--ckpt CKPT]
    exsr ablate      --config FILE --out DIR [--steps N]
    exsr heatmap     --ckpt CKPT --lr IMG --exemplars IMG... --out DIR
    exsr serve       --ckpt CKPT --gallery DIR [--host H] [--port P] [--ui DIR]
    exsr hallucinate --ckpt CKPT --lr IMG --exemplars IMG... --out IMG
                     [--heatmaps DIR]
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import torch


def _cmd_make_data(args) -> int:
    from .synthetic import generate_corpus

    generate_corpus(args.out, args.identities, args.images,
                    size=args.size, seed=args.seed)
    print(f"wrote {args.identities} identities x {args.images} images to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .config import load_config
    from .data import ingest, make_splits
    from .training import TrainState, load_checkpoint, train

    cfg = load_config(args.config)
    if args.no_critic:
        cfg.train.use_critic = False
    if args.seed is not None:
        cfg.train.seed = args.seed
    index = ingest(cfg.data.root_dir, cfg.data.dataset_kind, cfg.data.min_images)
    train_index, _ = make_splits(index, seed=cfg.data.seed,
                                 split_file=cfg.data.split_file or None,
                                 train_fraction=cfg.data.train_fraction)
    if args.resume:
        state = load_checkpoint(args.resume, cfg.train, expect_config=cfg.model)
    else:
        state = TrainState.initialize(cfg.model, cfg.train, seed=cfg.train.seed)

    every = max(1, cfg.train.log_every)

    def progress(step, report):
        if step % every == 0:
            print(f"step {step}: main={report.total_main:.4f} "
                  f"gs={report.total_gs:.4f} critic={report.l_critic:.4f}")

    written = train(state, train_index, cfg.train, callbacks=[progress])
    print(f"checkpoints: {[str(p) for p in written]}")
    return 0


def _cmd_eval(args) -> int:
    from .metrics import MetricReport, bicubic_baseline, score_pair

    if args.ckpt is None:
        report = bicubic_baseline(args.manifest, args.scale)
    else:
        from .data import read_manifest
        from .images import bicubic_downsample, load_image
        from .service import ModelRunner

        runner = ModelRunner(args.ckpt, gallery_dir=None)
        cfg = runner.config
        report = MetricReport(method=f"model_x{cfg.scale_factor}",
                              config=cfg.arch_fields())
        for rec in read_manifest(args.manifest):
            hr = load_image(rec.target_path, size=cfg.hr_height)
            lr = bicubic_downsample(hr, cfg.scale_factor)
            ex = torch.stack([load_image(p, size=cfg.hr_height)
                              for p in rec.exemplar_paths])
            out = runner.run(lr.unsqueeze(0), ex.unsqueeze(0))
            s, p = score_pair(out.sr.float(), hr.unsqueeze(0))
            report.ssim_values.append(float(s[0]))
            report.psnr_values.append(float(p[0]))
    summary = report.summary()
    print(f"{summary['method']}: ssim={summary['ssim_mean']:.4f} "
          f"psnr={summary['psnr_mean']:.2f} dB over {summary['count']} images")
    if args.out:
        report.save(args.out)
    return 0


def _cmd_ablate(args) -> int:
    from .config import load_config
    from .data import ingest, make_splits
    from .metrics import run_ablation

    cfg = load_config(args.config)
    index = ingest(cfg.data.root_dir, cfg.data.dataset_kind, cfg.data.min_images)
    train_index, _ = make_splits(index, seed=cfg.data.seed,
                                 train_fraction=cfg.data.train_fraction)
    cells = run_ablation(cfg.model, train_index, args.out,
                         train_steps=args.steps, seed=cfg.train.seed)
    for cell in cells:
        print(cell)
    return 0


def _load_runner_inputs(args):
    from .images import bicubic_downsample, load_image
    from .service import ModelRunner

    runner = ModelRunner(args.ckpt, gallery_dir=None)
    cfg = runner.config
    lr = load_image(args.lr)
    if lr.shape[-2:] != (cfg.lr_height, cfg.lr_width):
        # HR-sized input: apply the pinned bicubic kernel ourselves
        hr = load_image(args.lr, size=cfg.hr_height)
        lr = bicubic_downsample(hr, cfg.scale_factor)
    ex = torch.stack([load_image(p, size=cfg.hr_height) for p in args.exemplars])
    return runner, lr.unsqueeze(0), ex.unsqueeze(0)


def _write_heatmaps(out, exemplars, directory: Path) -> None:
    from PIL import Image

    from .metrics import render_weight_heatmap

    directory.mkdir(parents=True, exist_ok=True)
    for tag, weights in (("lr", out.weights_lr), ("2x", out.weights_2x)):
        overlays = render_weight_heatmap(weights.float(), exemplars.float())
        for k in range(overlays.shape[1]):
            Image.fromarray(overlays[0, k]).save(
                directory / f"weights_{tag}_exemplar{k}.png")


def _cmd_heatmap(args) -> int:
    runner, lr, ex = _load_runner_inputs(args)
    out = runner.run(lr, ex)
    _write_heatmaps(out, ex, Path(args.out))
    print(f"wrote heatmaps to {args.out}")
    return 0


def _cmd_hallucinate(args) -> int:
    from .images import save_image

    runner, lr, ex = _load_runner_inputs(args)
    out = runner.run(lr, ex, seed=args.seed)
    save_image(out.sr[0].float(), args.out)
    print(f"wrote {args.out}")
    if args.heatmaps:
        _write_heatmaps(out, ex, Path(args.heatmaps))
        print(f"wrote heatmaps to {args.heatmaps}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(args.ckpt, args.gallery, host=args.host, port=args.port, ui_dir=args.ui)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = argparse.ArgumentParser(prog="exsr", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="generate a synthetic face corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, default=40)
    p.add_argument("--images", type=int, default=8)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_make_data)

    p = sub.add_parser("train", help="run or resume a training loop")
    p.add_argument("--config", required=True)
    p.add_argument("--resume")
    p.add_argument("--no-critic", action="store_true")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint or the bicubic baseline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scale", type=int, default=8)
    p.add_argument("--ckpt")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("ablate", help="run the exemplar-count/fusion grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=30)
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("heatmap", help="render fusion-weight overlays")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--lr", required=True)
    p.add_argument("--exemplars", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_heatmap)

    p = sub.add_parser("hallucinate", help="one-shot super-resolution")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--lr", required=True)
    p.add_argument("--exemplars", nargs="+", required=True)
    p.add_argument("--out", default="sr.png")
    p.add_argument("--heatmaps")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_hallucinate)

    p = sub.add_parser("serve", help="start the HTTP inference service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui")
    p.set_defaults(fn=_cmd_serve)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
