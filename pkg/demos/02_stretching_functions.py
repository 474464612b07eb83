"""
Stretching functions: faster adaptation with the same guarantee
===============================================================

The update step size is fixed (the theory requires it), so after an abrupt
shift the raw parameter can take a while to walk to its new level. A
stretching function re-maps the parameter to the actual interval adjustment:
exponential stretching moves the adjustment gently near zero and fast far
from it, and the error-adaptive variant additionally reacts to how badly the
last step went. The guarantee is untouched because the underlying update
never changes.
"""

import riskcal as rc
from riskcal.streams import standardize_stream

STEPS = 12_000
WINDOW = (4001, STEPS)

variants = {
    "none": rc.Stretch("none"),
    "exponential": rc.Stretch("exponential"),
    "error_adaptive": rc.Stretch("error_adaptive", beta_score=0.05,
                                 beta_loss=0.15, beta_low=-0.5, beta_high=0.5),
}

print(f"{'stretching':>16} {'coverage':>9} {'MSL':>7} {'mean len':>9}")
for name, stretch in variants.items():
    stream = standardize_stream(
        rc.synthetic_stream(rc.SyntheticConfig(seed=1), STEPS), 3000)
    model = rc.LinearPinballModel(5, (0.05, 0.95), lr=0.1)
    spec = rc.RiskSpec(r=0.1, gamma=0.05, m=-9999, M=9999, B=1.0)
    trace = rc.run_stream(stream, model, rc.CqrConstructor(0.05, 0.95),
                          rc.BinaryLossFn(), spec, stretch)
    rep = rc.evaluate(trace, window=WINDOW, alpha=0.1)
    print(f"{name:>16} {rep.coverage:9.4f} {rep.msl:7.3f} "
          f"{rep.mean_length:9.3f}")

print("\nAll rows hit ~90% coverage; the stretchings differ in how quickly")
print("they recover after shifts, visible in the streak metric.")
