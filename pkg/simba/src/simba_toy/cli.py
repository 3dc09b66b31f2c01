"""CLI for the toy detector: dataset generation, training, checkpoint scoring."""

from __future__ import annotations

import argparse
import sys

from .data import ToySpec, generate_toy_dataset
from .model import SimbaConfig
from .spectrogram import SpectrogramConfig
from .train import SamplingParams, predict_with_checkpoint, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simba-toy", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic planted-artifact dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n-train", type=int, default=64)
    g.add_argument("--n-test", type=int, default=32)
    g.add_argument("--frames", type=int, default=16)
    g.add_argument("--frame-size", type=int, default=64)
    g.add_argument("--no-video-artifact", action="store_true")
    g.add_argument("--no-audio-artifact", action="store_true")
    g.add_argument("--leading-silence-ms", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train on a harness protocol directory")
    t.add_argument("--protocol", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--head", choices=("binary", "multiclass"), default="binary")
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--weight-decay", type=float, default=0.05)
    t.add_argument("--adam-eps", type=float, default=1e-8)
    t.add_argument("--plateau-patience", type=int, default=4)
    t.add_argument("--early-stop", type=int, default=8)
    t.add_argument("--max-epochs", type=int, default=40)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--base-channels", type=int, default=16)
    t.add_argument("--no-attention", action="store_true")
    t.add_argument("--n", type=int, default=16, help="frames per clip")
    t.add_argument("--step", type=int, default=1)
    t.add_argument("--jitter", action="store_true")
    t.add_argument("--spectrogram-hop", type=int, default=160)
    t.add_argument("--trimmed-manifest", default=None)
    t.add_argument("--detector-name", default="simba")
    t.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("predict", help="score a manifest with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--condition", default="untrimmed")
    p.add_argument("--head", choices=("multimodal", "video", "audio"), default="multimodal")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--step", type=int, default=1)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "generate":
        spec = ToySpec(
            n_train=args.n_train,
            n_test=args.n_test,
            n_frames=args.frames,
            frame_size=args.frame_size,
            video_artifact=not args.no_video_artifact,
            audio_artifact=not args.no_audio_artifact,
            leading_silence_ms=args.leading_silence_ms,
            seed=args.seed,
        )
        manifest = generate_toy_dataset(args.out, spec)
        print(f"wrote {manifest}")
        return 0

    if args.command == "train":
        config = SimbaConfig(
            head=args.head,
            lr=args.lr,
            weight_decay=args.weight_decay,
            adam_eps=args.adam_eps,
            plateau_patience=args.plateau_patience,
            early_stop_patience=args.early_stop,
            max_epochs=args.max_epochs,
            batch_size=args.batch_size,
            base_channels=args.base_channels,
            attention_enabled=not args.no_attention,
            seed=args.seed,
        )
        result = train(
            args.protocol,
            args.out,
            config=config,
            sampling=SamplingParams(n_frames=args.n, step=args.step, jitter=args.jitter),
            spec_config=SpectrogramConfig(hop=args.spectrogram_hop),
            trimmed_test_manifest=args.trimmed_manifest,
            detector_name=args.detector_name,
        )
        print(
            f"trained {result.epochs_run} epochs (best val loss {result.best_val_loss:.4f}, "
            f"{result.lr_reductions} lr reductions, early stop: {result.stopped_early})"
        )
        for head, path in result.prediction_files.items():
            print(f"{head}: {path}")
        print(f"embeddings: {result.embedding_file}")
        print(f"checkpoint: {result.checkpoint}")
        return 0

    if args.command == "predict":
        path = predict_with_checkpoint(
            args.checkpoint, args.manifest, args.out,
            condition=args.condition,
            sampling=SamplingParams(n_frames=args.n, step=args.step),
            head=args.head,
        )
        print(f"wrote {path}")
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
