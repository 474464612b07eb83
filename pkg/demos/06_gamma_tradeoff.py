"""
Choosing the step size: the adaptivity / width trade-off
========================================================

The step size gamma is the one knob the theory leaves to you. Small gamma
reacts slowly to shifts (long miscoverage streaks); large gamma overshoots
and pays with wider intervals. This sweep runs the same seeds through a grid
and tabulates the trade-off; the experiment runner's `sweep` command does
the same thing and ranks by validation pinball loss.
"""

import numpy as np

import riskcal as rc
from riskcal.streams import standardize_stream

GAMMAS = [0.025, 0.05, 0.1, 0.2, 0.35]
STEPS = 8_000
SEEDS = range(4)

print(f"{'gamma':>7} {'coverage':>9} {'MSL':>7} {'mean len':>9}")
for gamma in GAMMAS:
    cov, msl_vals, lens = [], [], []
    for seed in SEEDS:
        stream = standardize_stream(
            rc.synthetic_stream(rc.SyntheticConfig(seed=seed), STEPS), 3000)
        model = rc.LinearPinballModel(5, (0.05, 0.95), lr=0.1)
        spec = rc.RiskSpec(r=0.1, gamma=gamma, m=-9999, M=9999, B=1.0)
        trace = rc.run_stream(stream, model, rc.CqrConstructor(0.05, 0.95),
                              rc.BinaryLossFn(), spec)
        rep = rc.evaluate(trace, window=(3001, STEPS), alpha=0.1)
        cov.append(rep.coverage)
        msl_vals.append(rep.msl)
        lens.append(rep.mean_length)
    print(f"{gamma:7.3f} {np.mean(cov):9.4f} {np.nanmean(msl_vals):7.3f} "
          f"{np.mean(lens):9.3f}")

print("\nEvery gamma hits ~90% coverage (that part is guaranteed); larger")
print("gamma buys shorter streaks at the price of longer intervals.")
