# genreg/gradcheck.py
# -*- coding: utf-8 -*-
"""Central finite-difference verification of analytic gradients."""

import logging
from typing import Callable, Sequence

import numpy as np

from genreg.autodiff import Tensor

logger = logging.getLogger(__name__)


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    num_coords: int = 100,
    seed: int = 0,
) -> float:
    """Return the max relative error between analytic and numeric gradients.

    `f` must rebuild its graph on every call and be deterministic. Coordinates
    are sampled uniformly across all parameters (all of them when there are
    fewer than `num_coords`). The error per coordinate is
    |analytic - numeric| / max(1, |analytic|).
    """
    if any(p.dtype != np.float64 for p in params):
        logger.warning("grad_check running below float64; tolerances may not hold.")

    for p in params:
        p.zero_grad()
    f().backward()
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]

    coords = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    if len(coords) > num_coords:
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(coords), size=num_coords, replace=False)
        coords = [coords[k] for k in sorted(picked)]

    worst = 0.0
    for i, flat_index in coords:
        p = params[i]
        index = np.unravel_index(flat_index, p.shape) if p.ndim else ()
        original = p.data[index]
        p.data[index] = original + h
        plus = f().item()
        p.data[index] = original - h
        minus = f().item()
        p.data[index] = original
        numeric = (plus - minus) / (2.0 * h)
        a = float(analytic[i][index])
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))

    for p in params:
        p.zero_grad()
    logger.debug(f"grad_check over {len(coords)} coordinates: max relative error {worst:.3e}")
    return worst
