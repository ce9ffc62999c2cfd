#!/usr/bin/env python3
"""Synthesize weather videos, train the restoration network, restore and
evaluate test videos.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from viws import __version__, log
from viws.config import ConfigManager
from viws.errors import ViwsError

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USER_ERROR, EXIT_INTERNAL_ERROR = 0, 1, 2
COMMANDS = ("synthesize", "train", "infer", "evaluate")


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=__doc__, add_help=True)
    parser.add_argument("command", choices=COMMANDS, help="What to run.")
    parser.add_argument(
        "--version",
        "-v",
        action="version",
        version=f"viws v{__version__}",
    )
    parser.add_argument(
        "--debug",
        "-d",
        default=False,
        action="store_true",
        help="Use debug logging level.",
    )
    parser.add_argument(
        "--config",
        "-c",
        type=str,
        default=None,
        help="JSON run-config file; presets fill everything it leaves out.",
    )
    run_params = parser.add_argument_group(
        "Run",
        description="Used by train, infer and evaluate",
    )
    run_params.add_argument(
        "--resume",
        action="store_true",
        help="Continue training from --checkpoint or <output_root>/last.pt.",
    )
    run_params.add_argument(
        "--checkpoint",
        type=str,
        default=None,
        help="Checkpoint to resume from or to restore with.",
    )
    run_params.add_argument(
        "--input",
        "-i",
        type=str,
        default=None,
        help="Video directory to restore; without it every test video is restored.",
    )
    run_params.add_argument(
        "--output",
        "-o",
        type=str,
        default=None,
        help="Output directory for restored frames (infer) or predictions to score (evaluate).",
    )
    return parser


def parse_args(args: Optional[List[str]]) -> argparse.Namespace:
    return create_parser().parse_args(args=args)


def run_command(parsed_args: argparse.Namespace) -> None:
    from viws import high_level

    if parsed_args.config:
        ConfigManager.use_config_file(parsed_args.config)
    config = ConfigManager.run_config()
    config.validate()
    command = parsed_args.command

    if command == "synthesize":
        high_level.synthesize(config)
        ConfigManager.write_resolved(config.paths.dataset_root, config)
    elif command == "train":
        resume = None
        if parsed_args.resume:
            resume = parsed_args.checkpoint or Path(config.paths.output_root) / "last.pt"
        ConfigManager.write_resolved(config.paths.output_root, config)
        high_level.train(config, resume=resume)
    elif command == "infer":
        if parsed_args.output:
            config.infer.output_dir = parsed_args.output
        model = high_level.load_model(config, parsed_args.checkpoint, config.infer.device)
        out_dir = high_level.restored_root(config)
        if parsed_args.input:
            written = high_level.infer_directory(model, parsed_args.input, out_dir, config.infer.device)
            logger.info(f"restored {len(written)} frames into {out_dir}")
        else:
            outputs = high_level.infer_manifest(
                model, high_level.load_manifest(config), out_dir, device=config.infer.device
            )
            logger.info(f"restored {len(outputs)} test videos into {out_dir}")
        ConfigManager.write_resolved(out_dir, config)
    elif command == "evaluate":
        high_level.evaluate(config, parsed_args.output)
        ConfigManager.write_resolved(Path(config.paths.output_root) / "evaluate", config)


def main(args: Optional[List[str]] = None) -> int:
    from rich.logging import RichHandler

    logging.basicConfig(level=logging.INFO, handlers=[RichHandler()])

    for noisy in ("PIL", "matplotlib"):
        logging.getLogger(noisy).setLevel("CRITICAL")
        logging.getLogger(noisy).propagate = False

    try:
        parsed_args = parse_args(args)
    except SystemExit as e:
        # argparse exits 2 on bad usage; --help/--version exit 0
        return EXIT_OK if not e.code else EXIT_USER_ERROR

    if parsed_args.debug:
        log.setLevel(logging.DEBUG)

    try:
        run_command(parsed_args)
    except (ViwsError, ValueError, OSError) as e:
        logger.error(f"{parsed_args.command} failed: {e}")
        return EXIT_USER_ERROR
    except Exception:
        logger.exception(f"{parsed_args.command} crashed")
        return EXIT_INTERNAL_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
