"""Online base models exposing quantile predictions.

The calibration layer treats the model as a black box with two methods:
``predict(x, tau)`` for a conditional-quantile estimate and ``update(x, y)``
to learn from the newly revealed pair. The risk guarantee holds no matter
how good or bad the model is; these implementations exist so experiments
have something honest to calibrate.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri


def pinball_loss(y: float, yhat: float, tau: float) -> float:
    """Quantile (pinball) loss: tau*(y-yhat) above the estimate,
    (1-tau)*(yhat-y) at or below it."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    d = y - yhat
    if d > 0:
        return tau * d
    return (1.0 - tau) * (-d)


def pinball_grad(y: float, yhat: float, tau: float) -> float:
    """Subgradient of the pinball loss with respect to the estimate.

    -tau when the estimate is below the target, (1-tau) otherwise; the kink
    at y == yhat takes the second branch, matching the loss definition.
    """
    return -tau if y > yhat else (1.0 - tau)


class LinearPinballModel:
    """Linear quantile regressor trained by stochastic subgradient steps.

    One independent weight vector per tracked quantile level; no crossing
    penalty (crossings are normalized away downstream). ``n_sgd_steps``
    controls how many subgradient steps each arrival triggers.
    """

    def __init__(self, n_features: int, taus=(0.05, 0.95), lr: float = 0.1,
                 fit_intercept: bool = True, n_sgd_steps: int = 1):
        if n_features < 1:
            raise ValueError("n_features must be >= 1")
        if lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if n_sgd_steps < 1:
            raise ValueError("n_sgd_steps must be >= 1")
        self.taus = tuple(float(t) for t in taus)
        for t in self.taus:
            if not 0.0 < t < 1.0:
                raise ValueError(f"tracked tau must be in (0, 1), got {t}")
        self.lr = lr
        self.fit_intercept = fit_intercept
        self.n_sgd_steps = n_sgd_steps
        dim = n_features + (1 if fit_intercept else 0)
        self.weights = {t: np.zeros(dim) for t in self.taus}

    def _features(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.fit_intercept:
            return np.concatenate([x, [1.0]])
        return x

    def predict(self, x, tau: float) -> float:
        w = self.weights.get(float(tau))
        if w is None:
            raise ValueError(f"tau {tau} is not tracked; tracked: {self.taus}")
        return float(w @ self._features(x))

    def update(self, x, y: float) -> None:
        feats = self._features(x)
        if not np.isfinite(feats).all() or not math.isfinite(y):
            raise ValueError("non-finite input to model update")
        for tau, w in self.weights.items():
            for _ in range(self.n_sgd_steps):
                g = pinball_grad(y, float(w @ feats), tau)
                w -= self.lr * g * feats


class OracleModel:
    """Analytic conditional quantiles of a known Gaussian stream.

    ``mu_fn``/``sigma_fn`` map a feature vector to the conditional mean and
    standard deviation; any quantile level can be queried.
    """

    def __init__(self, mu_fn, sigma_fn):
        self.mu_fn = mu_fn
        self.sigma_fn = sigma_fn
        self._z = {}

    def predict(self, x, tau: float) -> float:
        z = self._z.get(tau)
        if z is None:
            if not 0.0 < tau < 1.0:
                raise ValueError(f"tau must be in (0, 1), got {tau}")
            z = float(ndtri(tau))
            self._z[tau] = z
        return self.mu_fn(x) + self.sigma_fn(x) * z

    def update(self, x, y: float) -> None:
        pass


class ConstantModel:
    """Fixed per-quantile outputs, independent of the input. Test scaffolding
    and a worst-case stand-in: the calibration layer must cope with it."""

    def __init__(self, values: dict | None = None, default: float = 0.0):
        self.values = dict(values) if values else {}
        self.default = default

    def predict(self, x, tau: float) -> float:
        return float(self.values.get(tau, self.default))

    def update(self, x, y: float) -> None:
        pass


class ReplayModel:
    """Per-step quantile predictions precomputed by an external model.

    The plug-in path for models trained outside this package: run them
    offline, dump one row of quantile estimates per stream step, and replay
    the rows here. ``update`` advances the cursor; ``predict`` reads the
    current row, so the calibration loop's ordering is preserved.
    """

    def __init__(self, predictions: dict):
        self.taus = tuple(sorted(float(t) for t in predictions))
        if not self.taus:
            raise ValueError("need at least one tracked quantile level")
        self._rows = {float(t): np.asarray(v, dtype=float)
                      for t, v in predictions.items()}
        self.n_steps = len(next(iter(self._rows.values())))
        for t, v in self._rows.items():
            if len(v) != self.n_steps:
                raise ValueError("prediction columns have unequal lengths")
            if not np.isfinite(v).all():
                raise ValueError(f"non-finite prediction for tau={t}")
        self._t = 0

    @classmethod
    def from_csv(cls, path) -> "ReplayModel":
        """Columns named q_<tau>, e.g. q_0.05,q_0.95; one row per step."""
        import csv as _csv
        with open(path, newline="") as fh:
            reader = _csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ValueError(f"{path}: missing header row")
            cols = [c for c in reader.fieldnames if c.startswith("q_")]
            if not cols:
                raise ValueError(f"{path}: no q_<tau> columns in header")
            data = {float(c[2:]): [] for c in cols}
            for row in reader:
                for c in cols:
                    data[float(c[2:])].append(float(row[c]))
        return cls(data)

    def predict(self, x, tau: float) -> float:
        if self._t >= self.n_steps:
            raise RuntimeError(
                f"replay exhausted after {self.n_steps} steps")
        rows = self._rows.get(float(tau))
        if rows is None:
            raise ValueError(f"tau {tau} is not replayed; have {self.taus}")
        return float(rows[self._t])

    def update(self, x, y: float) -> None:
        self._t += 1
