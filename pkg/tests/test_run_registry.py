# tests/test_run_registry.py
# -*- coding: utf-8 -*-

import asyncio
from types import SimpleNamespace

import pytest

import run_registry
from genreg.manifest import RunManifest
from utils import publish_run


@pytest.fixture
def registry(tmp_path):
    path = str(tmp_path / "runs.db")
    run_registry.set_db_path(path)
    asyncio.run(run_registry.init_db())
    return path


def _manifest(command="train", lr=0.1):
    manifest = RunManifest.create(command, {"lr": lr}, [0, 1], [])
    manifest.outputs = {"out/model.ckpt": "aa" * 32}
    return manifest


class TestRuns:
    def test_record_and_get(self, registry):
        manifest = _manifest()
        asyncio.run(run_registry.record_run(manifest))
        run = asyncio.run(run_registry.get_run(manifest.manifest_id))
        assert run["command"] == "train"
        assert run["config_json"] == {"lr": 0.1}
        assert run["seeds"] == [0, 1]
        assert run["outputs"] == {"out/model.ckpt": "aa" * 32}
        assert run["artifacts"] == {}

    def test_unknown_run(self, registry):
        assert asyncio.run(run_registry.get_run("nope")) is None

    def test_rerun_updates_same_row(self, registry):
        manifest = _manifest()
        asyncio.run(run_registry.record_run(manifest))
        manifest.outputs = {"out/other.ckpt": "bb" * 32}
        asyncio.run(run_registry.record_run(manifest))
        stats = asyncio.run(run_registry.get_registry_stats())
        assert stats["total_runs"] == 1
        assert asyncio.run(run_registry.get_run(manifest.manifest_id))["outputs"] == {"out/other.ckpt": "bb" * 32}

    def test_list_runs_filters_by_command(self, registry):
        for manifest in (_manifest("train", 0.1), _manifest("train", 0.2), _manifest("evaluate")):
            asyncio.run(run_registry.record_run(manifest))
        assert len(asyncio.run(run_registry.list_runs())) == 3
        trains = asyncio.run(run_registry.list_runs(command="train"))
        assert {run["command"] for run in trains} == {"train"}
        assert len(trains) == 2
        assert len(asyncio.run(run_registry.list_runs(limit=1))) == 1


# =============================================================================
# Artifacts and metrics
# =============================================================================

class TestArtifactsAndMetrics:
    def test_artifacts_upsert(self, registry):
        manifest = _manifest()
        asyncio.run(run_registry.record_run(manifest))
        assert asyncio.run(run_registry.record_artifacts(manifest.manifest_id, {"a": "1", "b": "2"})) == 2
        asyncio.run(run_registry.record_artifacts(manifest.manifest_id, {"a": "3"}))
        run = asyncio.run(run_registry.get_run(manifest.manifest_id))
        assert run["artifacts"] == {"a": "3", "b": "2"}
        assert asyncio.run(run_registry.get_registry_stats())["total_artifacts"] == 2

    def test_metrics_rows(self, registry):
        records = [
            {"step": 0, "loss": 1.5, "ce1": 1.2, "p": 0.9, "phase": "train"},
            {"step": 10, "loss": 0.8, "val_mae": None},
        ]
        assert asyncio.run(run_registry.record_metrics("m1", records)) == 5
        rows = asyncio.run(run_registry.get_run_metrics("m1", name="loss"))
        assert [tuple(row) for row in rows] == [(0, "loss", 1.5), (10, "loss", 0.8)]
        assert tuple(asyncio.run(run_registry.get_run_metrics("m1", name="val_mae"))[0]) == (10, "val_mae", None)

    def test_metrics_replaced_on_rerun(self, registry):
        asyncio.run(run_registry.record_metrics("m1", [{"step": 0, "loss": 1.0}, {"step": 1, "loss": 0.5}]))
        asyncio.run(run_registry.record_metrics("m1", [{"step": 0, "loss": 2.0}]))
        assert [tuple(r) for r in asyncio.run(run_registry.get_run_metrics("m1"))] == [(0, "loss", 2.0)]
        assert asyncio.run(run_registry.get_registry_stats())["metric_rows"] == 1


# =============================================================================
# Publishing from commands
# =============================================================================

def _settings(path, enabled=True):
    return SimpleNamespace(toolkit=SimpleNamespace(registry_enabled=enabled, registry_path=path))


class TestPublishRun:
    def test_disabled(self, tmp_path):
        assert publish_run(_settings(str(tmp_path / "runs.db"), enabled=False), _manifest()) is False
        assert not (tmp_path / "runs.db").exists()

    def test_records_everything(self, tmp_path):
        path = str(tmp_path / "runs.db")
        manifest = _manifest()
        assert publish_run(_settings(path), manifest, metrics=[{"step": 0, "loss": 1.0}])
        run_registry.set_db_path(path)
        run = asyncio.run(run_registry.get_run(manifest.manifest_id))
        assert run["artifacts"] == manifest.outputs
        assert len(asyncio.run(run_registry.get_run_metrics(manifest.manifest_id))) == 1

    def test_failure_is_a_warning(self, tmp_path, caplog):
        unwritable = str(tmp_path / "missing_dir" / "runs.db")
        assert publish_run(_settings(unwritable), _manifest()) is False
        assert "Could not record run" in caplog.text
