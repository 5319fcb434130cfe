# commands/vocab_commands.py
# -*- coding: utf-8 -*-
"""Vocabulary construction and codec round-trip commands."""

import logging
import os

from genreg.codec import DEFAULT_TOLERANCE, encode, validate_roundtrip
from genreg.vocab import STRATEGIES, ValueVocabulary, token_frequency
from utils import command_manifest, ensure_dir, parse_float_list, publish_run
from utils.pipeline import build_vocabulary, load_dataset
from utils.reporting import format_table, write_rows_csv

logger = logging.getLogger(__name__)


def _frequency_rows(frequency):
    vocab = frequency.vocab
    return [
        {"token_id": vocab.first_value_id + i, "value": value, "count": int(frequency.counts[i])}
        for i, value in enumerate(vocab.value_tokens)
    ]


def cmd_build_vocab(args, settings) -> int:
    """Build a vocabulary, write it as JSON and write its token-frequency CSV."""
    values = parse_float_list(args.values)
    strategy = args.strategy or settings.vocab.strategy
    if strategy == "manual" and not values and not settings.vocab.values and not args.scaled:
        args.parser.error("--strategy manual needs --values (or --scaled for the 1-3-5 design)")
    if args.eps is not None:
        settings.vocab.eps = args.eps

    dataset = load_dataset(settings, args.data, args.schema)
    out_dir = ensure_dir(args.out or os.path.join(settings.toolkit.output_dir, "vocab"))
    manifest = command_manifest("build-vocab", args, settings, [settings.data.seed], [args.data, args.schema])

    strategies = list(STRATEGIES) if args.compare else [strategy]
    summary = []
    primary = None
    for name in strategies:
        vocab = build_vocabulary(name, dataset.targets, settings.vocab, values if name == "manual" else None)
        frequency = token_frequency(dataset.targets, vocab, settings.vocab.max_len)
        suffix = "" if len(strategies) == 1 else f"_{name}"

        vocab_path = os.path.join(out_dir, f"vocab{suffix}.json")
        vocab.save(vocab_path)
        freq_path = write_rows_csv(_frequency_rows(frequency), os.path.join(out_dir, f"token_frequency{suffix}.csv"))
        manifest.add_output(vocab_path)
        manifest.add_output(freq_path)

        roundtrip = validate_roundtrip(dataset.targets, vocab, settings.vocab.max_len, DEFAULT_TOLERANCE)
        summary.append({
            "strategy": name,
            "tokens": vocab.num_values,
            "balance_ratio": frequency.balance_ratio(),
            "unused_fraction": frequency.unused_fraction(),
            "pct_within_tolerance": roundtrip.pct_within_tolerance,
            "mean_seq_len": roundtrip.mean_seq_len,
        })
        if name == strategy:
            primary = (vocab, frequency)

    if args.compare:
        summary_path = write_rows_csv(summary, os.path.join(out_dir, "strategy_comparison.csv"))
        manifest.add_output(summary_path)
    print(format_table(summary))

    if primary is not None:
        vocab, frequency = primary
        top = [{"value": v, "count": c} for v, c in frequency.top_k(args.top_k)]
        print(f"\nTop {len(top)} tokens ({vocab.strategy}):")
        print(format_table(top))

    manifest.write(out_dir)
    publish_run(settings, manifest)
    logger.info(f"Vocabulary artifacts written to {out_dir} (manifest {manifest.manifest_id})")
    return 0


def cmd_encode_check(args, settings) -> int:
    """Round-trip every target through the codec and print the statistics table."""
    vocab = ValueVocabulary.load(args.vocab)
    max_len = args.max_len or settings.vocab.max_len

    if args.value:
        rows = []
        for y in args.value:
            seq = encode(y, vocab, max_len, args.tolerance)
            rows.append({
                "y": y,
                "tokens": " ".join(f"{vocab.value_of(i):g}" for i in seq.ids),
                "encoding_error": seq.encoding_error,
                "truncated": seq.truncated,
            })
        print(format_table(rows))
        return 0

    dataset = load_dataset(settings, args.data, args.schema)
    report = validate_roundtrip(dataset.targets, vocab, max_len, args.tolerance)
    print(format_table([{"stat": k, "value": v} for k, v in report.as_rows()]))
    return 0


def setup(subparsers):
    p = subparsers.add_parser("build-vocab", help="Build a value vocabulary and its token-frequency report.")
    p.add_argument("--data", help="Target CSV (default: synthetic data from the data config section)")
    p.add_argument("--schema", help="Optional YAML dataset schema")
    p.add_argument("--strategy", choices=STRATEGIES, help="Construction strategy (default: vocab.strategy)")
    p.add_argument("--values", help="Comma-separated token values for --strategy manual")
    p.add_argument("--scaled", action="store_true", help="Manual strategy from the 1-3-5 base scaled by powers of 10")
    p.add_argument("--eps", type=float, help="Relative reconstruction tolerance for the dynamic strategy")
    p.add_argument("--compare", action="store_true", help="Also build the other strategies on the same data")
    p.add_argument("--top-k", type=int, default=15, help="Rows in the printed frequency view")
    p.add_argument("--out", help="Output directory (default: <output_dir>/vocab)")
    p.set_defaults(handler=cmd_build_vocab, parser=p)

    p = subparsers.add_parser("encode-check", help="Encode/decode targets and print round-trip statistics.")
    p.add_argument("--vocab", required=True, help="Vocabulary JSON")
    p.add_argument("--data", help="Target CSV (default: synthetic data)")
    p.add_argument("--schema", help="Optional YAML dataset schema")
    p.add_argument("--value", type=float, action="append", help="Encode only this value; repeatable")
    p.add_argument("--max-len", type=int, help="Sequence cap (default: vocab.max_len)")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE, help="Relative tolerance")
    p.set_defaults(handler=cmd_encode_check, parser=p)
