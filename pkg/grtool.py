# grtool.py
# -*- coding: utf-8 -*-
"""Main entry point for the generative-regression toolkit."""

# --- Standard Library Imports ---
import argparse
import importlib
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import List, Optional

# --- Third-Party Imports ---
from dotenv import load_dotenv

# --- Local Imports ---
from genreg import __version__
from genreg.autodiff import set_default_dtype
from genreg.errors import GenRegError
from settings import load_config

COMMANDS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'commands')


def setup_logging(log_level: str = "INFO", log_file: str = None):
    """Configure logging with console output and optional rotating file handler."""
    level = getattr(logging, log_level.upper(), logging.INFO)

    formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(module)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    # Prevent duplicate handlers on repeated calls
    root_logger.handlers.clear()

    # Console handler (stderr keeps stdout free for tables)
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    # Rotating file handler
    if log_file:
        file_handler = RotatingFileHandler(
            log_file, maxBytes=5 * 1024 * 1024, backupCount=3, encoding='utf-8'
        )
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)
        logging.info(f"File logging enabled: {log_file}")


def build_parser() -> argparse.ArgumentParser:
    """Build the top-level parser and let every module in commands/ add its subcommands."""
    parser = argparse.ArgumentParser(
        prog='grtool',
        description='Generative regression: value vocabularies, token decoders and CLEM training.',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--config', default='config.yaml',
                        help='YAML or key=value settings file (default: config.yaml)')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='Override one setting; repeatable')
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')

    loaded = 0
    for filename in sorted(os.listdir(COMMANDS_DIR)):
        if filename.endswith('.py') and not filename.startswith('__'):
            module = importlib.import_module(f'commands.{filename[:-3]}')
            module.setup(subparsers)
            loaded += 1
    logging.debug(f"Completed loading {loaded} command modules.")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, 'handler', None):
        parser.print_help()
        return 2

    # Load configuration
    settings = None
    try:
        settings = load_config(args.config, args.overrides)
    except GenRegError as e:
        parser.error(str(e))

    # Setup logging (must be after config load to use configured level)
    setup_logging(settings.toolkit.log_level, settings.toolkit.log_file)
    set_default_dtype(settings.toolkit.dtype)

    try:
        return int(args.handler(args, settings) or 0)
    except (GenRegError, OSError) as e:
        logging.error(f"{args.command} failed: {type(e).__name__} - {e}")
        return 1
    except Exception as e:
        logging.critical(f"An unexpected error occurred while running {args.command}: {type(e).__name__} - {e}")
        return 2


# --- Main Execution Block ---
if __name__ == '__main__':
    sys.exit(main())
