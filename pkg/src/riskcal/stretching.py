"""Stretching functions: monotone maps from the calibration parameter to the
effective set adjustment.

The control loop updates its parameter with a fixed step size, which can be
too slow under abrupt shift. A stretching function reshapes the parameter
scale (e.g. exponentially) so the *adjustment* can move fast while the
update rule itself, and hence the risk guarantee, is untouched. The adaptive
variants carry a clipped additive state ``lam`` that is nudged by the
previous step's conformity score (and, for the error-adaptive kind, by how
far the previous loss sat from the target).

State discipline: ``apply`` never modifies state; ``updated`` never reads the
calibration parameter. Both facts keep the fixed-step-size requirement of
the risk guarantee visibly intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

STRETCH_KINDS = ("none", "exponential", "exp_linear_zone",
                 "score_adaptive", "error_adaptive")

_ADAPTIVE = ("score_adaptive", "error_adaptive")


def clip(x: float, lo: float, hi: float) -> float:
    """max(min(x, hi), lo), exactly."""
    return max(min(x, hi), lo)


@dataclass(frozen=True)
class Stretch:
    """One stretching function plus the internal state of the adaptive kinds.

    beta_score scales the score term, beta_loss the loss-distance exponent,
    and [beta_low, beta_high] is the hard clipping range for ``lam``.
    """

    kind: str = "none"
    beta_score: float = 0.0
    beta_loss: float = 0.0
    beta_low: float = 0.0
    beta_high: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in STRETCH_KINDS:
            raise ValueError(f"unknown stretch kind: {self.kind!r}")
        if self.beta_low > 0 or self.beta_high < 0:
            raise ValueError("need beta_low <= 0 <= beta_high")
        if not self.beta_low <= self.lam <= self.beta_high:
            raise ValueError("lam must start inside [beta_low, beta_high]")

    @property
    def is_adaptive(self) -> bool:
        return self.kind in _ADAPTIVE

    def apply(self, theta: float) -> float:
        """Map the calibration parameter to the effective adjustment."""
        kind = self.kind
        if kind == "none":
            return theta
        if kind == "exponential":
            if theta > 0.0:
                return math.exp(theta) - 1.0
            return -math.exp(-theta) + 1.0
        if kind == "exp_linear_zone":
            if theta > 0.1:
                return math.exp(theta) - 1.0
            if theta < -0.1:
                return -math.exp(-theta) + 1.0
            return theta
        # score_adaptive / error_adaptive
        return theta + self.lam

    def updated(self, score: float, prev_loss: float, r: float) -> "Stretch":
        """Advance ``lam`` using the previous step's score and loss.

        No-op for the non-adaptive kinds. The score-adaptive kind ignores the
        loss term; the error-adaptive kind amplifies the score by how far the
        previous loss was from the target risk.
        """
        if self.kind == "score_adaptive":
            step = self.beta_score * score
        elif self.kind == "error_adaptive":
            step = self.beta_score * score * math.exp(
                self.beta_loss * abs(prev_loss - r))
        else:
            return self
        lam = clip(self.lam - step, self.beta_low, self.beta_high)
        return replace(self, lam=lam)


def update_lambda(state: Stretch, score: float, prev_loss: float,
                  r: float) -> Stretch:
    """Functional alias for :meth:`Stretch.updated`."""
    return state.updated(score, prev_loss, r)
