# utils/__init__.py
# -*- coding: utf-8 -*-
"""Shared helpers for the command modules."""

import asyncio
import logging
import os
from typing import Dict, Iterable, List, Optional

logger = logging.getLogger(__name__)


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def parse_float_list(text: Optional[str]) -> List[float]:
    """'1,5,10' -> [1.0, 5.0, 10.0]; blank entries are skipped."""
    if not text:
        return []
    return [float(part) for part in text.split(",") if part.strip()]


def parse_int_list(text: Optional[str]) -> List[int]:
    if not text:
        return []
    return [int(part) for part in text.split(",") if part.strip()]


def publish_run(settings, manifest, metrics: Optional[Iterable[Dict]] = None) -> bool:
    """Record a finished run in the registry. Failures are logged, never raised."""
    if not settings.toolkit.registry_enabled:
        return False
    import run_registry

    async def _publish():
        run_registry.set_db_path(settings.toolkit.registry_path)
        await run_registry.init_db()
        await run_registry.record_run(manifest)
        await run_registry.record_artifacts(manifest.manifest_id, manifest.outputs)
        if metrics:
            await run_registry.record_metrics(manifest.manifest_id, metrics)

    try:
        asyncio.run(_publish())
        return True
    except Exception as e:
        logger.warning(f"Could not record run {manifest.manifest_id} in registry: {type(e).__name__} - {e}")
        return False


def command_manifest(command: str, args, settings, seeds: Iterable[int], input_paths: Iterable[str]):
    """RunManifest over the settings bundle plus the command's own flags."""
    from genreg.manifest import RunManifest

    flags = {k: v for k, v in sorted(vars(args).items())
             if k not in ('handler', 'parser', 'command', 'config', 'overrides') and not callable(v)}
    config = {'settings': settings.to_dict(), 'args': flags}
    return RunManifest.create(command, config, list(seeds), [p for p in input_paths if p])
