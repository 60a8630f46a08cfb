"""
cli.py — Command-line entry point
----------------------------------

    python cli.py <command> --config PATH [--checkpoint PATH] [--out DIR] [--seed N]
                  [--scale S] [-n N] [--components K ...]

Commands: pretrain, generate, finetune, evaluate, loso, export-embeddings, ablate,
pca-sweep, serve.

Exit codes: 0 success, 2 configuration / validation error, 3 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import torch

from config import settings
from tools import commands
from tools.errors import EEGDMError

logger = logging.getLogger("eegdm")

NEEDS_CHECKPOINT = {"generate", "finetune", "evaluate", "loso", "export-embeddings"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eegdm", description="EEG latent diffusion pre-training toolkit")
    parser.add_argument(
        "command",
        choices=[
            "pretrain", "generate", "finetune", "evaluate", "loso",
            "export-embeddings", "ablate", "pca-sweep", "serve",
        ],
    )
    parser.add_argument("--config", type=Path, help="TOML run configuration")
    parser.add_argument("--checkpoint", type=Path, help="Model archive to start from")
    parser.add_argument("--out", type=Path, help="Output directory (defaults to <output.directory>/<command>)")
    parser.add_argument("--seed", type=int, help="Run a single seed instead of train.seeds")
    parser.add_argument("--scale", type=float, help="Classifier-free guidance scale")
    parser.add_argument("-n", type=int, default=8, help="Number of signals to generate")
    parser.add_argument("--components", type=int, nargs="+", default=[1, 5, 10, 20], help="pca-sweep k values")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    return parser


def dispatch(args: argparse.Namespace):
    if args.command == "serve":
        import uvicorn

        uvicorn.run("main:app", host=args.host, port=args.port)
        return None
    if args.config is None:
        raise EEGDMError("--config is required")
    if args.command in NEEDS_CHECKPOINT and args.checkpoint is None:
        raise EEGDMError(f"{args.command} requires --checkpoint")

    if args.command == "pretrain":
        return commands.cmd_pretrain(args.config, args.out, args.seed)
    if args.command == "generate":
        return commands.cmd_generate(args.config, args.checkpoint, args.n, args.scale, args.seed, args.out)
    if args.command == "finetune":
        return commands.cmd_finetune(args.config, args.checkpoint, args.out, args.seed)
    if args.command == "evaluate":
        return commands.cmd_evaluate(args.config, args.checkpoint, args.out)
    if args.command == "loso":
        return commands.cmd_loso(args.config, args.checkpoint, args.out, args.seed)
    if args.command == "export-embeddings":
        return commands.cmd_export_embeddings(args.config, args.checkpoint, args.out, args.seed)
    if args.command == "ablate":
        return commands.cmd_ablate(args.config, args.out, args.seed)
    return commands.cmd_pca_sweep(args.config, args.components, args.out, args.seed)


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    torch.use_deterministic_algorithms(True, warn_only=True)
    args = build_parser().parse_args(argv)
    try:
        result = dispatch(args)
    except EEGDMError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    if result is not None:
        print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
