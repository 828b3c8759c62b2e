"""Command line: `train` a rewriter on a supervision file, `serve` a
checkpoint over HTTP."""

from __future__ import annotations

import argparse
import sys

from .data import DataError
from .serve import serve_forever
from .train import TrainConfig, TrainingError, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ft-trainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune the rewriter")
    p.add_argument("--data", required=True, help="supervision json-lines file")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--base-model", default=None,
                   help="backbone checkpoint, or 'tiny' for the offline toy model")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", action="store_true")

    p = sub.add_parser("serve", help="serve a checkpoint over the chat protocol")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--workers", type=int, default=4)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            defaults = TrainConfig()
            config = TrainConfig(
                base_model=args.base_model or defaults.base_model,
                epochs=args.epochs if args.epochs is not None else defaults.epochs,
                learning_rate=args.lr if args.lr is not None else defaults.learning_rate,
                batch_size=args.batch if args.batch is not None else defaults.batch_size,
                seed=args.seed if args.seed is not None else defaults.seed,
            )
            log = train(args.data, args.out, config, resume=args.resume)
            losses = ", ".join(f"{loss:.4f}" for loss in log["losses"])
            print(f"trained {log['epochs_completed']} epoch(s); losses: {losses}")
            return 0
        serve_forever(args.ckpt, args.port, args.workers)
        return 0
    except (DataError, TrainingError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
