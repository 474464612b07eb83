"""Post-hoc evaluation of calibration traces.

All functions here are pure and operate on completed coverage sequences, so
they can be recomputed from exported traces. The streak metric reports NaN
(never 0) when a sequence has no miscoverage streaks, so that averaging
across trials cannot silently deflate it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def coverage(covered) -> float:
    """Fraction of covered steps."""
    c = np.asarray(covered, dtype=bool)
    if c.size == 0:
        raise ValueError("empty coverage sequence")
    return float(c.mean())


def miscoverage_streaks(covered) -> list[int]:
    """Lengths of maximal runs of consecutive miscoverage, in order.

    A trailing run truncated by the end of the sequence still counts with
    its truncated length.
    """
    c = np.asarray(covered, dtype=bool)
    if c.size == 0:
        raise ValueError("empty coverage sequence")
    streaks = []
    run = 0
    for flag in c:
        if flag:
            if run:
                streaks.append(run)
            run = 0
        else:
            run += 1
    if run:
        streaks.append(run)
    return streaks


def msl(covered) -> float:
    """Mean miscoverage streak length; NaN when no streak exists."""
    streaks = miscoverage_streaks(covered)
    if not streaks:
        return math.nan
    return float(np.mean(streaks))


def mc_risk(covered, cap: int | None = None) -> float:
    """Mean of the miscoverage-counter sequence implied by coverage flags."""
    c = np.asarray(covered, dtype=bool)
    if c.size == 0:
        raise ValueError("empty coverage sequence")
    total = 0.0
    counter = 0
    for flag in c:
        if flag:
            counter = 0
        else:
            counter += 1
            total += counter if cap is None else min(counter, cap)
    return total / c.size


def delta_coverage(covered, groups, alpha: float) -> float:
    """Mean absolute deviation of per-group coverage from 1 - alpha.

    Groups are categorical labels aligned with the coverage flags; only
    groups that actually occur contribute. Reported here on the raw 0-1
    scale (the experiment report also carries the 0-100 scaling).
    """
    c = np.asarray(covered, dtype=bool)
    g = np.asarray(groups)
    if c.size == 0:
        raise ValueError("empty coverage sequence")
    if g.shape != c.shape:
        raise ValueError("groups must align with coverage flags")
    target = 1.0 - alpha
    devs = [abs(float(c[g == v].mean()) - target) for v in np.unique(g)]
    return float(np.mean(devs))


@dataclass
class EvalReport:
    """Summary of one trace over an evaluation window."""

    coverage: float
    mc_risk: float
    msl: float
    delta_coverage: float
    mean_loss: float
    mean_length: float
    length_quantiles: dict = field(default_factory=dict)
    window: tuple = (1, 0)
    n_steps: int = 0

    def to_dict(self) -> dict:
        d = {
            "coverage": self.coverage,
            "mc_risk": self.mc_risk,
            "msl": self.msl,
            "delta_coverage": self.delta_coverage,
            "delta_coverage_scaled": (self.delta_coverage * 100.0
                                      if not math.isnan(self.delta_coverage)
                                      else math.nan),
            "mean_loss": self.mean_loss,
            "mean_length": self.mean_length,
            "length_quantiles": self.length_quantiles,
            "window": list(self.window),
            "n_steps": self.n_steps,
        }
        return d


def evaluate(trace, window: tuple | None = None, alpha: float = 0.1,
             mc_cap: int | None = None) -> EvalReport:
    """Evaluate a trace over a window of 1-based step indices (inclusive).

    The window is a report parameter, not a property of the run; it defaults
    to the whole trace. Interval sizes of full-space steps are infinite and
    excluded from the finite length quantiles.
    """
    n = len(trace.covered)
    if window is None:
        window = (1, n)
    start, end = window
    if not (1 <= start <= end <= n):
        raise ValueError(f"window {window} outside trace of length {n}")
    sl = slice(start - 1, end)
    cov = trace.covered[sl]
    sizes = trace.size[sl]
    losses = trace.loss[sl]

    group = getattr(trace, "group", None)
    if group is not None and np.any(group[sl] >= 0):
        dc = delta_coverage(cov, group[sl], alpha)
    else:
        dc = math.nan

    finite = sizes[np.isfinite(sizes)]
    if finite.size:
        qs = {q: float(np.quantile(finite, q)) for q in (0.1, 0.5, 0.9)}
        mean_len = float(finite.mean())
    else:
        qs = {}
        mean_len = math.nan

    mean_loss = float(np.mean(losses)) if losses.ndim == 1 \
        else float(np.mean(losses[:, 0]))

    return EvalReport(
        coverage=coverage(cov),
        mc_risk=mc_risk(cov, mc_cap),
        msl=msl(cov),
        delta_coverage=dc,
        mean_loss=mean_loss,
        mean_length=mean_len,
        length_quantiles=qs,
        window=(start, end),
        n_steps=end - start + 1,
    )
