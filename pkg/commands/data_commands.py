# commands/data_commands.py
# -*- coding: utf-8 -*-
"""Synthetic dataset generation."""

import logging
import os

import numpy as np

from genreg.data import synth_longtail, write_csv
from utils import command_manifest, ensure_dir, publish_run
from utils.reporting import format_table

logger = logging.getLogger(__name__)


def cmd_synth_data(args, settings) -> int:
    data = settings.data
    for key in ("n", "d", "seed", "b", "zero_fraction"):
        value = getattr(args, key)
        if value is not None:
            data.update(key, value)

    dataset = synth_longtail(data.n, data.d, data.seed, data.synth_params())
    out_path = args.out or os.path.join(settings.toolkit.output_dir, "data", "synth.csv")
    out_dir = ensure_dir(os.path.dirname(os.path.abspath(out_path)))
    write_csv(dataset, out_path)

    manifest = command_manifest("synth-data", args, settings, [data.seed], [])
    manifest.add_output(out_path)
    manifest.write(out_dir)
    publish_run(settings, manifest)

    y = dataset.targets
    centered = y - y.mean()
    skew = float((centered ** 3).mean() / (y.std() ** 3)) if y.std() > 0 else 0.0
    print(format_table([{
        "rows": len(dataset),
        "features": dataset.feature_dim,
        "mean_y": float(y.mean()),
        "median_y": float(np.median(y)),
        "max_y": float(y.max()),
        "zero_fraction": float(np.mean(y == 0)),
        "skewness": skew,
    }]))
    return 0


def setup(subparsers):
    p = subparsers.add_parser("synth-data", help="Generate a seeded long-tailed synthetic dataset as CSV.")
    p.add_argument("--n", type=int, help="Rows (default: data.n)")
    p.add_argument("--d", type=int, help="Feature dimension (default: data.d)")
    p.add_argument("--seed", type=int, help="Generator seed (default: data.seed)")
    p.add_argument("--b", "--noise", dest="b", type=float, help="Noise scale; 0 makes y a function of x")
    p.add_argument("--zero-fraction", type=float, help="Fraction of rows with y = 0")
    p.add_argument("--out", help="Output CSV (default: <output_dir>/data/synth.csv)")
    p.set_defaults(handler=cmd_synth_data, parser=p)
