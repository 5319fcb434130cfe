# commands/registry_commands.py
# -*- coding: utf-8 -*-
"""Run-registry inspection."""

import asyncio
import json
import logging

import run_registry
from utils.reporting import format_table

logger = logging.getLogger(__name__)


async def _collect(args):
    await run_registry.init_db()
    if args.id:
        return await run_registry.get_run(args.id), None
    runs = await run_registry.list_runs(args.limit, args.command_filter)
    stats = await run_registry.get_registry_stats()
    return runs, stats


def cmd_runs(args, settings) -> int:
    run_registry.set_db_path(settings.toolkit.registry_path)
    result, stats = asyncio.run(_collect(args))

    if args.id:
        if result is None:
            logger.error(f"No run with manifest id '{args.id}' in {settings.toolkit.registry_path}")
            return 1
        print(json.dumps(result, indent=2, sort_keys=True, default=str))
        return 0

    print(format_table(result, ["manifest_id", "command", "seeds", "created_at"]))
    print()
    print(format_table([stats]))
    return 0


def setup(subparsers):
    p = subparsers.add_parser("runs", help="List recorded runs from the run registry.")
    p.add_argument("--limit", type=int, default=20, help="Most recent runs to show")
    p.add_argument("--command", dest="command_filter", help="Only runs of this command")
    p.add_argument("--id", help="Show one run with its artifacts")
    p.set_defaults(handler=cmd_runs, parser=p)
