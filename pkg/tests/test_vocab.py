# tests/test_vocab.py
# -*- coding: utf-8 -*-

import json
import math
import time

import numpy as np
import pytest

from genreg.codec import validate_roundtrip
from genreg.data import synth_longtail
from genreg.errors import ConvergenceError, DegenerateTargetsError, VocabularyError
from genreg.vocab import (
    EOS_ID,
    PAD_ID,
    SOS_ID,
    ValueVocabulary,
    build_binary,
    build_dynamic,
    build_manual,
    build_manual_scaled,
    fingerprint_targets,
    token_frequency,
)


def _three_levels(n=30):
    return [10.0] * n + [20.0] * n + [40.0] * n


# =============================================================================
# ValueVocabulary
# =============================================================================

class TestValueVocabulary:
    def test_special_ids_decode_to_zero(self, small_vocab):
        for token_id in (PAD_ID, SOS_ID, EOS_ID):
            assert small_vocab.value_of(token_id) == 0.0
        assert small_vocab.first_value_id == 3
        assert small_vocab.size == 11

    def test_ids_follow_decreasing_values(self, small_vocab):
        assert small_vocab.value_of(3) == 30.0
        assert small_vocab.value_of(10) == 0.01
        assert small_vocab.id_of(5.0) == 5

    @pytest.mark.parametrize("tokens", [(1.0, 2.0), (3.0, 3.0), (1.0, -1.0), (math.inf,), ()])
    def test_invalid_token_lists_rejected(self, tokens):
        with pytest.raises(VocabularyError):
            ValueVocabulary(tokens)

    def test_save_and_load(self, small_vocab, tmp_path):
        path = str(tmp_path / "vocab.json")
        small_vocab.save(path)
        loaded = ValueVocabulary.load(path)
        assert loaded == small_vocab
        data = json.loads((tmp_path / "vocab.json").read_text(encoding="utf-8"))
        assert data["format_version"] == 1
        assert data["special"] == {"pad": 0, "sos": 1, "eos": 2}

    def test_load_rejects_unknown_format_version(self, small_vocab, tmp_path):
        data = small_vocab.to_dict()
        data["format_version"] = 2
        path = tmp_path / "vocab.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        with pytest.raises(VocabularyError, match="format_version"):
            ValueVocabulary.load(str(path))

    def test_load_rejects_increasing_tokens(self, small_vocab, tmp_path):
        data = small_vocab.to_dict()
        data["value_tokens"] = [1.0, 2.0]
        path = tmp_path / "vocab.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        with pytest.raises(VocabularyError):
            ValueVocabulary.load(str(path))

    def test_load_rejects_broken_json(self, tmp_path):
        path = tmp_path / "vocab.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(VocabularyError):
            ValueVocabulary.load(str(path))


# =============================================================================
# Constructors
# =============================================================================

class TestBuildDynamic:
    def test_single_value_dataset(self):
        vocab = build_dynamic([10.0, 10.0, 10.0])
        assert vocab.value_tokens == (10.0,)
        assert vocab.meta["final_err"] == 0.0
        assert vocab.strategy == "dynamic"

    def test_single_sample(self):
        assert build_dynamic([10.0]).value_tokens == (10.0,)

    def test_three_levels(self):
        vocab = build_dynamic(_three_levels())
        assert vocab.value_tokens == (40.0, 20.0, 10.0)
        assert vocab.meta["iterations"] == 3

    def test_meta_records_parameters(self):
        targets = _three_levels()
        meta = build_dynamic(targets, q_start=95, q_end=40, alpha=0.9).meta
        assert (meta["q_start"], meta["q_end"], meta["alpha"], meta["eps"]) == (95, 40, 0.9, 1e-3)
        assert meta["source_fingerprint"] == fingerprint_targets(reversed(targets))

    def test_all_zero_targets(self):
        with pytest.raises(DegenerateTargetsError, match="degenerate targets"):
            build_dynamic([0.0, 0.0])

    @pytest.mark.parametrize("kwargs", [
        {"q_start": 40, "q_end": 50}, {"q_end": 0}, {"alpha": 0.0}, {"alpha": 1.5}, {"eps": 0.0},
    ])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(VocabularyError):
            build_dynamic([1.0, 2.0], **kwargs)

    def test_negative_or_empty_targets(self):
        with pytest.raises(VocabularyError):
            build_dynamic([])
        with pytest.raises(VocabularyError):
            build_dynamic([1.0, -1.0])

    def test_iteration_cap_reports_final_error(self):
        with pytest.raises(ConvergenceError, match="err="):
            build_dynamic(_three_levels(), max_iterations=1)

    def test_iteration_cap_names_the_setting(self):
        with pytest.raises(ConvergenceError, match="max_iterations=1"):
            build_dynamic(_three_levels(), max_iterations=1)

    def test_repair_stops_at_max_len(self):
        # 11 needs 8 + 3, one token too many
        targets = [8.0] * 20 + [3.0] * 20 + [11.0]
        vocab = build_dynamic(targets, q_start=50, q_end=50, alpha=1.0, max_len=1)
        assert vocab.value_tokens == (8.0, 3.0)
        assert vocab.meta["truncated"] == 1
        assert vocab.meta["repairs"] == 0
        assert vocab.meta["final_err"] == pytest.approx(3.0 / 11.0)
        report = validate_roundtrip(targets, vocab, max_len=1, tolerance=1e-3)
        assert report.truncated == vocab.meta["truncated"]

    def test_no_truncation_without_max_len(self):
        targets = [8.0] * 20 + [3.0] * 20 + [11.0]
        vocab = build_dynamic(targets, q_start=50, q_end=50, alpha=1.0)
        assert vocab.meta["truncated"] == 0
        assert vocab.meta["max_len"] is None
        assert vocab.meta["final_err"] == 0.0

    def test_zeros_are_ignored_by_error(self):
        vocab = build_dynamic([0.0, 0.0, 7.5, 7.5])
        assert vocab.value_tokens == (7.5,)

    def test_lognormal_targets_roundtrip(self, rng):
        targets = np.round(rng.lognormal(2.0, 1.0, size=500), 2)
        vocab = build_dynamic(targets)
        report = validate_roundtrip(targets, vocab)
        assert report.pct_within_tolerance == 100.0
        assert vocab.meta["iterations"] <= 128

    def test_long_tailed_construction_set_roundtrips(self):
        targets = synth_longtail(10_000, 8, seed=0).targets
        start = time.perf_counter()
        vocab = build_dynamic(targets, q_start=99, q_end=50, alpha=0.95, eps=1e-3)
        report = validate_roundtrip(targets, vocab)
        elapsed = time.perf_counter() - start
        assert report.pct_within_tolerance == 100.0
        assert report.max_rel_err <= 1e-3
        assert vocab.meta["final_err"] <= 1e-3
        assert elapsed < 10.0


class TestBuildBinary:
    def test_doubling_past_max(self):
        assert build_binary(10, 1).value_tokens == (16.0, 8.0, 4.0, 2.0, 1.0)

    def test_one_doubling(self):
        assert build_binary(1, 1).value_tokens == (2.0, 1.0)

    def test_fractional_unit(self):
        assert build_binary(1, 0.25).value_tokens == (2.0, 1.0, 0.5, 0.25)

    def test_max_below_unit(self):
        with pytest.raises(VocabularyError):
            build_binary(0.5, 1)


class TestBuildManual:
    def test_sorted_decreasing(self):
        vocab = build_manual([1, 3, 5, 10, 30, 50])
        assert vocab.value_tokens == (50.0, 30.0, 10.0, 5.0, 3.0, 1.0)

    def test_duplicates(self):
        with pytest.raises(VocabularyError):
            build_manual([5, 5])

    def test_empty(self):
        with pytest.raises(VocabularyError):
            build_manual([])

    def test_scaled_design(self):
        vocab = build_manual_scaled(100)
        assert vocab.value_tokens == (500.0, 300.0, 100.0, 50.0, 30.0, 10.0, 5.0, 3.0, 1.0)
        assert vocab.strategy == "manual"

    def test_scaled_with_unit(self):
        vocab = build_manual_scaled(2, base=(1, 5), unit=0.1)
        assert vocab.value_tokens == (5.0, 1.0, 0.5, 0.1)


# =============================================================================
# Token frequency
# =============================================================================

class TestTokenFrequency:
    def test_greedy_counts(self, small_vocab):
        freq = token_frequency([47.0], small_vocab)
        assert freq.count_of(30) == 1
        assert freq.count_of(10) == 1
        assert freq.count_of(5) == 1
        assert freq.count_of(1) == 2
        assert freq.counts.sum() == 5

    def test_identical_targets_hit_one_token(self, small_vocab):
        freq = token_frequency([10.0] * 12, small_vocab)
        assert freq.count_of(10) == 12
        assert freq.counts.sum() == 12
        assert freq.unused_fraction() == pytest.approx(7 / 8)

    def test_top_k_order(self, small_vocab):
        top = token_frequency([47.0, 1.0, 30.0], small_vocab).top_k(3)
        assert top == [(1.0, 3), (30.0, 2), (10.0, 1)]

    def test_balance_ratio_inf_when_median_zero(self, small_vocab):
        assert token_frequency([10.0], small_vocab).balance_ratio() == math.inf

    def test_dynamic_more_balanced_than_binary(self):
        targets = _three_levels()
        dynamic = token_frequency(targets, build_dynamic(targets))
        binary = token_frequency(targets, build_binary(max(targets), 1.0))
        assert dynamic.balance_ratio() == pytest.approx(1.0)
        assert binary.balance_ratio() == pytest.approx(2.0)
        assert dynamic.balance_ratio() < binary.balance_ratio()
