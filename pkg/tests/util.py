"""Shared generators and independent oracle implementations for the test suite.

Oracles here must stay naive and independent of the library code paths they
check: direct density products instead of log-sum-exp, brute-force sums
instead of integral tables, subgradient descent instead of coordinate descent.
"""
from __future__ import annotations

import numpy as np

from bofsent.prosody import PcmSignal
from bofsent.video import FrameVolume


def tone(freq: float, duration: float, sample_rate: int = 16000, amplitude: float = 0.5) -> PcmSignal:
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    return PcmSignal(samples=amplitude * np.sin(2.0 * np.pi * freq * t), sample_rate=sample_rate)


def blob_volume(
    shape: tuple[int, int, int],
    center: tuple[float, float, float],
    sigma_s: float,
    sigma_t: float,
    contrast: float = 0.6,
    background: float = 0.1,
    frame_rate: float = 10.0,
) -> FrameVolume:
    """Separable Gaussian blob event at (ct, cy, cx)."""
    t_count, height, width = shape
    ct, cy, cx = center
    ts = np.arange(t_count)[:, None, None]
    ys = np.arange(height)[None, :, None]
    xs = np.arange(width)[None, None, :]
    bump = np.exp(
        -((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma_s**2) - (ts - ct) ** 2 / (2.0 * sigma_t**2)
    )
    return FrameVolume(frames=np.clip(background + contrast * bump, 0.0, 1.0), frame_rate=frame_rate)


def brute_box_sum(frames: np.ndarray, t0, t1, y0, y1, x0, x1) -> float:
    return float(frames[t0:t1, y0:y1, x0:x1].sum())


def direct_posterior(weights, means, variances, x) -> np.ndarray:
    """Bayes posterior over components via plain density products (no logs)."""
    weights = np.asarray(weights, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    densities = weights * np.prod(
        np.exp(-((x - means) ** 2) / (2.0 * variances)) / np.sqrt(2.0 * np.pi * variances), axis=1
    )
    return densities / densities.sum()


def direct_loglik(weights, means, variances, data) -> float:
    total = 0.0
    for row in np.asarray(data, dtype=np.float64):
        densities = np.asarray(weights) * np.prod(
            np.exp(-((row - means) ** 2) / (2.0 * np.asarray(variances)))
            / np.sqrt(2.0 * np.pi * np.asarray(variances)),
            axis=1,
        )
        total += np.log(densities.sum())
    return float(total)


def hinge_objective(w, b, X, y, C) -> float:
    margins = 1.0 - y * (X @ w + b)
    return float(0.5 * (w @ w + b * b) + C * np.maximum(margins, 0.0).sum())


def subgradient_svm(X, y, C, iters: int = 150_000) -> tuple[np.ndarray, float]:
    """Weighted-average projected subgradient descent on the hinge objective.

    Uses the 2/(t+2) step schedule with (t+1)-weighted averaging, valid for
    1-strongly-convex objectives; run long enough it lands within a fraction
    of the oracle tolerance.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, dim = X.shape
    augmented = np.hstack([X, np.ones((n, 1))])
    v = np.zeros(dim + 1)
    averaged = np.zeros(dim + 1)
    weight_sum = 0.0
    for t in range(iters):
        margins = 1.0 - y * (augmented @ v)
        active = margins > 0.0
        grad = v - C * (augmented[active] * y[active, None]).sum(axis=0)
        v = v - (2.0 / (t + 2.0)) * grad
        weight = t + 1.0
        weight_sum += weight
        averaged += weight * (v - averaged) / weight_sum
    return averaged[:dim], float(averaged[dim])
