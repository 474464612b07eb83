"""
The window-quantile baseline, and why the engine exists
=======================================================

The classic online-conformal recipe keeps a rolling window of conformity
scores and thresholds candidates at an empirical quantile whose level is
itself tuned online. It controls coverage well -- and only coverage: the
construction leans on a score function that encodes the 0-1 loss. The
calibration engine reproduces this baseline as a special case and controls
arbitrary bounded losses besides.

Both methods run here on the same shifting stream with the same model.
"""

import riskcal as rc
from riskcal.streams import standardize_stream

STEPS = 12_000
WINDOW = (4001, STEPS)


def fresh_stream():
    return standardize_stream(
        rc.synthetic_stream(rc.SyntheticConfig(seed=3), STEPS), 3000)


def fresh_model():
    return rc.LinearPinballModel(5, (0.05, 0.95), lr=0.1)


# window-quantile baseline
base_trace = rc.run_aci_stream(fresh_stream(), fresh_model(), gamma=0.05,
                               alpha=0.1, window_size=500)
base_rep = rc.evaluate(base_trace, window=WINDOW, alpha=0.1)

# the engine with error-adaptive stretching; the clipping range follows the
# recommended default, the scale of an average one-step change in y
from riskcal.streams import successive_difference_scale

warm_ys = [y for _, y, _ in list(fresh_stream())[:3000]]
delta = successive_difference_scale(warm_ys)
spec = rc.RiskSpec(r=0.1, gamma=0.05, m=-9999, M=9999, B=1.0)
stretch = rc.Stretch("error_adaptive", beta_score=0.02, beta_loss=0.15,
                     beta_low=-delta, beta_high=delta)
eng_trace = rc.run_stream(fresh_stream(), fresh_model(),
                          rc.CqrConstructor(0.05, 0.95), rc.BinaryLossFn(),
                          spec, stretch)
eng_rep = rc.evaluate(eng_trace, window=WINDOW, alpha=0.1)

print(f"{'method':>24} {'coverage':>9} {'MSL':>7} {'mean len':>9}")
print(f"{'window quantile':>24} {base_rep.coverage:9.4f} "
      f"{base_rep.msl:7.3f} {base_rep.mean_length:9.3f}")
print(f"{'engine (error adaptive)':>24} {eng_rep.coverage:9.4f} "
      f"{eng_rep.msl:7.3f} {eng_rep.mean_length:9.3f}")

print("\nCoverage matches for both; the engine generalizes to image, counter")
print("and classification losses where the score-window recipe does not apply.")
