# run_registry.py
# -*- coding: utf-8 -*-
"""Async run registry using aiosqlite.

Keeps a queryable history of every command run: its manifest, produced artifacts
and the per-step training metrics. The registry is a sidecar; primary artifacts
never depend on it.
"""

import datetime
import json
import logging
from typing import Dict, Iterable, List, Optional, Tuple

import aiosqlite

from genreg.manifest import RunManifest

logger = logging.getLogger(__name__)

# Module-level database path, set during initialization
_db_path: str = 'genreg_runs.db'


def set_db_path(path: str):
    """Set the database file path. Must be called before init_db()."""
    global _db_path
    _db_path = path


async def init_db():
    """Initialize the database and create tables."""
    async with aiosqlite.connect(_db_path) as db:
        await db.execute("PRAGMA journal_mode=WAL")

        await db.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                manifest_id TEXT PRIMARY KEY,
                command TEXT NOT NULL,
                config_json TEXT NOT NULL,
                seeds TEXT NOT NULL,
                inputs TEXT NOT NULL,
                outputs TEXT NOT NULL,
                created_at TEXT NOT NULL
            );
        ''')

        await db.execute('''
            CREATE TABLE IF NOT EXISTS artifacts (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                manifest_id TEXT NOT NULL,
                path TEXT NOT NULL,
                sha256 TEXT NOT NULL,
                UNIQUE(manifest_id, path)
            );
        ''')

        await db.execute('''
            CREATE TABLE IF NOT EXISTS run_metrics (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                manifest_id TEXT NOT NULL,
                step INTEGER NOT NULL,
                name TEXT NOT NULL,
                value REAL
            );
        ''')
        await db.commit()
    logger.debug(f"Run registry initialized at {_db_path}.")


# =============================================================================
# Runs
# =============================================================================

async def record_run(manifest: RunManifest) -> None:
    """Insert or refresh a run. Re-running identical inputs updates the same row."""
    async with aiosqlite.connect(_db_path) as db:
        await db.execute(
            """INSERT INTO runs (manifest_id, command, config_json, seeds, inputs, outputs, created_at)
               VALUES (?, ?, ?, ?, ?, ?, ?)
               ON CONFLICT(manifest_id) DO UPDATE SET
                   outputs = excluded.outputs,
                   created_at = excluded.created_at""",
            (manifest.manifest_id, manifest.command,
             json.dumps(manifest.config, sort_keys=True, default=str),
             json.dumps(manifest.seeds), json.dumps(manifest.inputs, sort_keys=True),
             json.dumps(manifest.outputs, sort_keys=True),
             datetime.datetime.now().isoformat())
        )
        await db.commit()


async def record_artifacts(manifest_id: str, artifacts: Dict[str, str]) -> int:
    """Upsert artifact fingerprints (path -> sha256). Returns the number written."""
    async with aiosqlite.connect(_db_path) as db:
        await db.executemany(
            """INSERT INTO artifacts (manifest_id, path, sha256) VALUES (?, ?, ?)
               ON CONFLICT(manifest_id, path) DO UPDATE SET sha256 = excluded.sha256""",
            [(manifest_id, path, digest) for path, digest in artifacts.items()]
        )
        await db.commit()
    return len(artifacts)


async def record_metrics(manifest_id: str, records: Iterable[Dict]) -> int:
    """Store training log records; every numeric field except `step` becomes one row."""
    rows: List[Tuple] = []
    for record in records:
        step = int(record.get('step', 0))
        for name, value in record.items():
            if name == 'step':
                continue
            if value is None or isinstance(value, (int, float)):
                rows.append((manifest_id, step, name, None if value is None else float(value)))

    async with aiosqlite.connect(_db_path) as db:
        # A rerun replaces the previous metrics of the same manifest
        await db.execute("DELETE FROM run_metrics WHERE manifest_id = ?", (manifest_id,))
        await db.executemany(
            "INSERT INTO run_metrics (manifest_id, step, name, value) VALUES (?, ?, ?, ?)",
            rows
        )
        await db.commit()
    return len(rows)


async def get_run(manifest_id: str) -> Optional[Dict]:
    """Get one run with its artifacts, or None."""
    async with aiosqlite.connect(_db_path) as db:
        db.row_factory = aiosqlite.Row
        async with db.execute("SELECT * FROM runs WHERE manifest_id = ?", (manifest_id,)) as cursor:
            row = await cursor.fetchone()
        if row is None:
            return None
        run = dict(row)
        async with db.execute(
            "SELECT path, sha256 FROM artifacts WHERE manifest_id = ? ORDER BY path", (manifest_id,)
        ) as cursor:
            run['artifacts'] = {r['path']: r['sha256'] async for r in cursor}
    for key in ('config_json', 'seeds', 'inputs', 'outputs'):
        run[key] = json.loads(run[key])
    return run


async def get_run_metrics(manifest_id: str, name: Optional[str] = None) -> List[Tuple[int, str, Optional[float]]]:
    """Get (step, name, value) rows for a run, optionally filtered by metric name."""
    query = "SELECT step, name, value FROM run_metrics WHERE manifest_id = ?"
    params: list = [manifest_id]
    if name is not None:
        query += " AND name = ?"
        params.append(name)
    query += " ORDER BY step, name"
    async with aiosqlite.connect(_db_path) as db:
        async with db.execute(query, params) as cursor:
            return await cursor.fetchall()


async def list_runs(limit: int = 20, command: Optional[str] = None) -> List[Dict]:
    """Most recent runs first."""
    query = "SELECT manifest_id, command, seeds, created_at FROM runs"
    params: list = []
    if command:
        query += " WHERE command = ?"
        params.append(command)
    query += " ORDER BY created_at DESC, manifest_id LIMIT ?"
    params.append(limit)
    async with aiosqlite.connect(_db_path) as db:
        db.row_factory = aiosqlite.Row
        async with db.execute(query, params) as cursor:
            rows = await cursor.fetchall()
            return [dict(row) for row in rows]


# =============================================================================
# Statistics
# =============================================================================

async def get_registry_stats() -> Dict[str, int]:
    """Aggregated counts for the `runs` command."""
    async with aiosqlite.connect(_db_path) as db:
        stats = {}

        async with db.execute("SELECT COUNT(*) FROM runs") as c:
            stats['total_runs'] = (await c.fetchone())[0]

        async with db.execute("SELECT COUNT(DISTINCT command) FROM runs") as c:
            stats['distinct_commands'] = (await c.fetchone())[0]

        async with db.execute("SELECT COUNT(*) FROM artifacts") as c:
            stats['total_artifacts'] = (await c.fetchone())[0]

        async with db.execute("SELECT COUNT(*) FROM run_metrics") as c:
            stats['metric_rows'] = (await c.fetchone())[0]

        return stats
