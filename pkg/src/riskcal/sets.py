"""Prediction sets and the functions that construct them.

A prediction set is one of: a real interval, a finite label set, a grid of
per-pixel intervals, or one of the two sentinels ``EMPTY_SET`` / ``FULL_SPACE``.
The sentinels exist so the calibration engine can clamp to a set whose loss is
known a priori (empty -> always miscovered, full -> always covered), which is
what makes the long-run risk guarantee unconditional.

Constructors are kept monotone in the calibration adjustment: a larger
adjustment never produces a smaller set. The control loop relies on this.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np


class _EmptySet:
    """Sentinel: the empty prediction set. Contains nothing, size 0."""

    __slots__ = ()

    def contains(self, y) -> bool:
        return False

    def size(self) -> float:
        return 0.0

    def __repr__(self) -> str:
        return "EMPTY_SET"


class _FullSpace:
    """Sentinel: the full label space. Contains everything, infinite size."""

    __slots__ = ()

    def contains(self, y) -> bool:
        return True

    def size(self) -> float:
        return math.inf

    def __repr__(self) -> str:
        return "FULL_SPACE"


EMPTY_SET = _EmptySet()
FULL_SPACE = _FullSpace()


@dataclass(slots=True)
class Interval:
    """Closed real interval [lo, hi]. Endpoint ties count as covered."""

    lo: float
    hi: float

    def contains(self, y) -> bool:
        return self.lo <= y <= self.hi

    def size(self) -> float:
        return self.hi - self.lo


@dataclass(slots=True)
class LabelSet:
    """Finite set of class labels (1-based label indices)."""

    members: frozenset

    def contains(self, y) -> bool:
        return y in self.members

    def size(self) -> float:
        return float(len(self.members))


@dataclass(slots=True)
class IntervalGrid:
    """Per-pixel closed intervals [lo, hi] over a 2-D grid.

    Individual pixels may be inverted (lo > hi); such pixels contain nothing,
    which is exactly how a negative adjustment shows up in image losses.
    """

    lo: np.ndarray
    hi: np.ndarray

    def pixel_covered(self, y: np.ndarray) -> np.ndarray:
        """Boolean grid: which pixels of ``y`` fall inside their interval."""
        return (self.lo <= y) & (y <= self.hi)

    def contains(self, y) -> bool:
        """Whole-grid coverage: every pixel inside its interval."""
        return bool(np.all(self.pixel_covered(y)))

    def size(self) -> float:
        """Mean per-pixel width, inverted pixels counted as width 0."""
        return float(np.mean(np.maximum(self.hi - self.lo, 0.0)))


# ---------------------------------------------------------------------------
# Interval constructors (regression)
# ---------------------------------------------------------------------------

def cqr_interval(q_lo: float, q_hi: float, adj: float):
    """Interval from quantile estimates widened by ``adj`` on both sides.

    Returns ``Interval(q_lo - adj, q_hi + adj)``, normalized to ``EMPTY_SET``
    when the adjusted endpoints invert. Crossing quantile estimates are
    permitted on input; the normalization keeps the map monotone in ``adj``.
    """
    if not (math.isfinite(q_lo) and math.isfinite(q_hi) and math.isfinite(adj)):
        raise ValueError(f"non-finite interval inputs: ({q_lo}, {q_hi}, {adj})")
    lo = q_lo - adj
    hi = q_hi + adj
    if lo > hi:
        return EMPTY_SET
    return Interval(lo, hi)


def cqr_score(q_lo: float, q_hi: float, y: float) -> float:
    """Signed distance of ``y`` to the nearer quantile endpoint.

    Negative inside [q_lo, q_hi], positive outside; max(q_lo - y, y - q_hi).
    """
    return max(q_lo - y, y - q_hi)


def quantile_scale_interval(model, x, theta: float, tau_floor: float = 1e-12):
    """Interval built by re-querying the model at a tuned miscoverage level.

    The calibration parameter lives on the quantile scale: the effective raw
    miscoverage is tau = -theta with theta in [-1, 0], so raising theta
    shrinks tau and widens the interval. tau is clipped into (0, 1].
    """
    tau = -theta
    if tau > 1.0:
        tau = 1.0
    if tau < tau_floor:
        tau = tau_floor
    lo = model.predict(x, tau / 2.0)
    hi = model.predict(x, 1.0 - tau / 2.0)
    if math.isnan(lo) or math.isnan(hi):
        raise RuntimeError("model produced non-finite quantile output")
    if lo > hi:
        return EMPTY_SET
    return Interval(lo, hi)


# ---------------------------------------------------------------------------
# Classification constructors
# ---------------------------------------------------------------------------

def _check_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probability vector must be 1-D and nonempty")
    if np.any(p < 0) or not np.isfinite(p).all():
        raise ValueError("probabilities must be finite and nonnegative")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {p.sum():.8f}, expected 1")
    return p


def class_threshold_set(probs, thr: float):
    """All labels whose probability is at least ``thr`` (labels are 1..K)."""
    p = _check_probs(probs)
    if thr <= 0.0:
        return FULL_SPACE
    if thr > 1.0:
        return EMPTY_SET
    members = frozenset(int(i) + 1 for i in np.nonzero(p >= thr)[0])
    if not members:
        return EMPTY_SET
    return LabelSet(members)


def class_cumulative_set(probs, level: float):
    """Smallest prefix of labels, sorted by descending probability, whose
    cumulative mass reaches ``level``.

    Ties in the sort are broken by ascending label index so traces stay
    deterministic. level <= 0 gives the empty set, level > 1 the full space.
    """
    p = _check_probs(probs)
    if level <= 0.0:
        return EMPTY_SET
    if level > 1.0:
        return FULL_SPACE
    order = np.lexsort((np.arange(p.size), -p))
    total = 0.0
    members = []
    for idx in order:
        members.append(int(idx) + 1)
        total += float(p[idx])
        if total >= level:
            break
    return LabelSet(frozenset(members))


# ---------------------------------------------------------------------------
# Image constructors and uncertainty heuristics
# ---------------------------------------------------------------------------

def image_interval(pred: np.ndarray, l_map: np.ndarray, u_map: np.ndarray,
                   lam: float) -> IntervalGrid:
    """Per-pixel intervals [pred - lam*l, pred + lam*u] around a predicted grid."""
    pred = np.asarray(pred, dtype=float)
    l_map = np.asarray(l_map, dtype=float)
    u_map = np.asarray(u_map, dtype=float)
    if pred.shape != l_map.shape or pred.shape != u_map.shape:
        raise ValueError(
            f"shape mismatch: pred {pred.shape}, l {l_map.shape}, u {u_map.shape}")
    if np.any(l_map < 0) or np.any(u_map < 0):
        raise ValueError("uncertainty maps must be nonnegative")
    return IntervalGrid(pred - lam * l_map, pred + lam * u_map)


class ConstantHeuristic:
    """Unit uncertainty in both directions for every pixel."""

    def __init__(self, value: float = 1.0):
        if value < 0:
            raise ValueError("constant heuristic value must be nonnegative")
        self.value = value

    def maps(self, shape):
        m = np.full(shape, self.value, dtype=float)
        return m, m.copy()

    def update(self, pred: np.ndarray, y: np.ndarray) -> None:
        pass


class RunningResidualHeuristic:
    """Per-pixel exponentially weighted mean of |pred - y| as a symmetric
    uncertainty estimate. Stands in for a learned residual model; the risk
    guarantee does not depend on its accuracy."""

    def __init__(self, decay: float = 0.1):
        if not 0 < decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        self.decay = decay
        self._mean = None

    def maps(self, shape):
        if self._mean is None:
            m = np.ones(shape, dtype=float)
        else:
            m = self._mean
        return m.copy(), m.copy()

    def update(self, pred: np.ndarray, y: np.ndarray) -> None:
        resid = np.abs(np.asarray(pred, dtype=float) - np.asarray(y, dtype=float))
        if self._mean is None:
            self._mean = resid
        else:
            self._mean = (1.0 - self.decay) * self._mean + self.decay * resid


class PreviousResidualsHeuristic:
    """Direction-aware uncertainty from the last ``window`` residual frames.

    Each frame contributes clamped residuals r+ = max(pred - y, 0) and
    r- = max(y - pred, 0); the lower/upper maps are their window means.
    An empty window yields zero maps (point intervals until data arrives).
    """

    def __init__(self, window: int = 5):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._plus = deque(maxlen=window)
        self._minus = deque(maxlen=window)

    def maps(self, shape):
        if not self._plus:
            z = np.zeros(shape, dtype=float)
            return z, z.copy()
        l_map = np.mean(self._plus, axis=0)
        u_map = np.mean(self._minus, axis=0)
        return l_map, u_map

    def update(self, pred: np.ndarray, y: np.ndarray) -> None:
        resid = np.asarray(pred, dtype=float) - np.asarray(y, dtype=float)
        self._plus.append(np.maximum(resid, 0.0))
        self._minus.append(np.maximum(-resid, 0.0))


# ---------------------------------------------------------------------------
# Constructor adapters wired into the control loop
# ---------------------------------------------------------------------------
#
# A constructor object exposes:
#   build(x, adj, model)   -> prediction set for the current step
#   score(x, y, model)     -> raw-model conformity score, or None if the
#                             constructor has no natural score (adaptive
#                             stretching requires one)
#   observe(x, y, model)   -> post-reveal bookkeeping (heuristic windows)

class CqrConstructor:
    """Quantile-pair interval widened on the value scale."""

    scored = True

    def __init__(self, tau_lo: float = 0.05, tau_hi: float = 0.95):
        if not (0 < tau_lo < tau_hi < 1):
            raise ValueError("need 0 < tau_lo < tau_hi < 1")
        self.tau_lo = tau_lo
        self.tau_hi = tau_hi

    def build(self, x, adj, model):
        q_lo = model.predict(x, self.tau_lo)
        q_hi = model.predict(x, self.tau_hi)
        if math.isnan(q_lo) or math.isnan(q_hi):
            raise RuntimeError("model produced non-finite quantile output")
        return cqr_interval(q_lo, q_hi, adj)

    def score(self, x, y, model):
        return cqr_score(model.predict(x, self.tau_lo),
                         model.predict(x, self.tau_hi), y)

    def observe(self, x, y, model):
        pass


class QuantileScaleConstructor:
    """Interval built by querying the model at the tuned miscoverage level."""

    scored = False

    def __init__(self, tau_floor: float = 1e-12):
        self.tau_floor = tau_floor

    def build(self, x, adj, model):
        # adj is the stretched calibration parameter; tau = -adj.
        return quantile_scale_interval(model, x, adj, self.tau_floor)

    def score(self, x, y, model):
        return None

    def observe(self, x, y, model):
        pass


class ClassThresholdConstructor:
    """Labels whose predicted probability clears -adj (larger adj, lower bar)."""

    scored = False

    def build(self, x, adj, model):
        return class_threshold_set(model.predict_proba(x), -adj)

    def score(self, x, y, model):
        return None

    def observe(self, x, y, model):
        pass


class ClassCumulativeConstructor:
    """Descending-probability prefix with cumulative mass >= 1 - adj."""

    scored = False

    def build(self, x, adj, model):
        return class_cumulative_set(model.predict_proba(x), 1.0 - adj)

    def score(self, x, y, model):
        return None

    def observe(self, x, y, model):
        pass


class ImageIntervalConstructor:
    """Per-pixel intervals around a predicted grid, scaled by the calibration
    adjustment, with a pluggable uncertainty heuristic.

    The stream is expected to supply the predicted grid as the feature ``x``
    (the stand-in for a base image model's output).
    """

    scored = False

    def __init__(self, heuristic=None):
        self.heuristic = heuristic if heuristic is not None else ConstantHeuristic()

    def build(self, x, adj, model):
        pred = np.asarray(x, dtype=float)
        l_map, u_map = self.heuristic.maps(pred.shape)
        return image_interval(pred, l_map, u_map, adj)

    def score(self, x, y, model):
        return None

    def observe(self, x, y, model):
        self.heuristic.update(np.asarray(x, dtype=float), y)
