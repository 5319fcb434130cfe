# tests/test_data.py
# -*- coding: utf-8 -*-

import numpy as np
import pytest

from genreg.data import (
    DatasetSchema,
    FeatureScaler,
    SynthParams,
    load_csv,
    split,
    synth_longtail,
    write_csv,
)
from genreg.errors import DataValidationError


def _write(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


# =============================================================================
# CSV ingestion
# =============================================================================

class TestLoadCsv:
    def test_well_formed(self, tmp_path):
        path = _write(tmp_path / "d.csv", ["a", "b", "y"], [[1, 2, 3.5], [4, 5, 0], [7, 8, 12]])
        dataset = load_csv(path)
        assert len(dataset) == 3
        assert dataset.feature_names == ["a", "b"]
        np.testing.assert_array_equal(dataset.targets, [3.5, 0.0, 12.0])
        np.testing.assert_array_equal(dataset.features[1], [4.0, 5.0])

    def test_negative_target_rejected_with_line(self, tmp_path):
        rows = [[i, float(i)] for i in range(150)]
        rows[41] = [41, -1]
        dataset = load_csv(_write(tmp_path / "d.csv", ["x", "y"], rows))
        assert len(dataset) == 149
        assert dataset.rejections[0].line == 43
        assert "negative target" in str(dataset.rejections[0])
        assert 41 not in dataset.row_ids

    def test_non_numeric_cell(self, tmp_path):
        rows = [[i, float(i)] for i in range(200)]
        rows[0] = ["abc", 1.0]
        dataset = load_csv(_write(tmp_path / "d.csv", ["x", "y"], rows))
        assert dataset.rejections[0].line == 2
        assert "'x'" in dataset.rejections[0].reason

    def test_too_many_rejections(self, tmp_path):
        path = _write(tmp_path / "d.csv", ["x", "y"], [[1, 2], [2, -1], [3, 4]])
        with pytest.raises(DataValidationError, match="line 3"):
            load_csv(path)

    def test_missing_target_column(self, tmp_path):
        path = _write(tmp_path / "d.csv", ["x", "z"], [[1, 2]])
        with pytest.raises(DataValidationError, match="target column 'y'"):
            load_csv(path)
        assert len(load_csv(path, require_target=False)) == 1

    def test_missing_schema_column(self, tmp_path):
        path = _write(tmp_path / "d.csv", ["x", "y"], [[1, 2]])
        with pytest.raises(DataValidationError, match="missing column"):
            load_csv(path, DatasetSchema(feature_columns=["x", "w"]))

    def test_schema_selects_and_renames(self, tmp_path):
        path = _write(tmp_path / "d.csv", ["id", "f1", "f2", "watch"], [[10, 1, 2, 3], [11, 4, 5, 6]])
        schema = DatasetSchema(feature_columns=["f2"], target_column="watch", id_column="id")
        dataset = load_csv(path, schema)
        np.testing.assert_array_equal(dataset.features[:, 0], [2.0, 5.0])
        np.testing.assert_array_equal(dataset.row_ids, [10, 11])

    def test_ratio_column(self, tmp_path):
        path = _write(tmp_path / "d.csv", ["x", "y", "duration"], [[1, 30, 60], [2, 10, 20]])
        dataset = load_csv(path, DatasetSchema(feature_columns=["x"], ratio_column="duration"))
        np.testing.assert_allclose(dataset.targets, [0.5, 0.5])

    def test_schema_file(self, tmp_path):
        schema_path = tmp_path / "schema.yaml"
        schema_path.write_text("target_column: watch\nunknown: 1\n", encoding="utf-8")
        assert DatasetSchema.load(str(schema_path)).target_column == "watch"

    def test_idempotent(self, tmp_path):
        path = _write(tmp_path / "d.csv", ["a", "y"], [[1, 2], [3, 4]])
        first, second = load_csv(path), load_csv(path)
        np.testing.assert_array_equal(first.features, second.features)
        np.testing.assert_array_equal(first.targets, second.targets)

    def test_write_then_load(self, tmp_path, synth_small):
        path = str(tmp_path / "synth.csv")
        write_csv(synth_small, path)
        loaded = load_csv(path)
        np.testing.assert_allclose(loaded.targets, synth_small.targets)
        np.testing.assert_allclose(loaded.features, synth_small.features, rtol=1e-9)


# =============================================================================
# Splits and standardization
# =============================================================================

class TestSplit:
    def test_sizes(self, synth_small):
        small = synth_small.subset(range(10))
        train, test = split(small, 0.8, seed=0)
        assert (len(train), len(test)) == (8, 2)

    def test_disjoint_and_exhaustive(self, synth_small):
        train, test = split(synth_small, 0.7, seed=1)
        ids = np.concatenate([train.row_ids, test.row_ids])
        assert len(set(train.row_ids) & set(test.row_ids)) == 0
        assert sorted(ids.tolist()) == list(range(len(synth_small)))

    def test_seeded(self, synth_small):
        a, _ = split(synth_small, 0.5, seed=3)
        b, _ = split(synth_small, 0.5, seed=3)
        c, _ = split(synth_small, 0.5, seed=4)
        np.testing.assert_array_equal(a.row_ids, b.row_ids)
        assert not np.array_equal(a.row_ids, c.row_ids)

    @pytest.mark.parametrize("ratio", [0.0, 1.0, 1.5])
    def test_bad_ratio(self, synth_small, ratio):
        with pytest.raises(DataValidationError):
            split(synth_small, ratio, seed=0)


def test_scaler_fit_on_train_split(synth_small):
    train, test = split(synth_small, 0.8, seed=0)
    scaler = FeatureScaler.fit(train.features * 3 + 1)
    scaled = scaler.transform(train.features * 3 + 1)
    np.testing.assert_allclose(scaled.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(scaled.std(axis=0), 1.0, atol=1e-12)
    with pytest.raises(DataValidationError):
        scaler.transform(test.features[:, :2])


def test_scaler_constant_column():
    scaler = FeatureScaler.fit(np.array([[1.0, 5.0], [2.0, 5.0]]))
    np.testing.assert_array_equal(scaler.transform([[1.5, 5.0]]), [[0.0, 0.0]])


# =============================================================================
# Synthetic data
# =============================================================================

class TestSynthLongtail:
    def test_seeded(self):
        a, b = synth_longtail(100, 3, seed=5), synth_longtail(100, 3, seed=5)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.targets, b.targets)
        assert not np.array_equal(a.targets, synth_longtail(100, 3, seed=6).targets)

    def test_noiseless_is_function_of_x(self):
        params = SynthParams(b=0.0)
        data = synth_longtail(200, 4, seed=1, params=params)
        again = synth_longtail(200, 4, seed=1, params=params)
        duplicated = np.concatenate([data.features, data.features])
        assert len(np.unique(duplicated, axis=0)) == 200
        np.testing.assert_array_equal(data.targets, again.targets)

    def test_targets_on_grid_and_capped(self):
        data = synth_longtail(2000, 4, seed=2)
        assert data.targets.min() >= 0.0 and data.targets.max() <= 300.0
        np.testing.assert_allclose(data.targets * 100, np.round(data.targets * 100), atol=1e-6)

    def test_zero_fraction(self):
        data = synth_longtail(10_000, 8, seed=0, params=SynthParams(zero_fraction=0.2))
        assert np.mean(data.targets == 0) == pytest.approx(0.2, abs=0.02)

    def test_long_tail(self):
        y = synth_longtail(10_000, 8, seed=0).targets
        centered = y - y.mean()
        skewness = np.mean(centered ** 3) / np.mean(centered ** 2) ** 1.5
        assert skewness > 2.0

    def test_invalid_sizes(self):
        with pytest.raises(DataValidationError):
            synth_longtail(0, 3, seed=0)
