"""
The experiment runner: configs, traces, reports, certificates
=============================================================

Everything the demos do by hand, the runner does from one JSON config:
seeded trials, a trace CSV per trial, per-trial and aggregate reports, and a
certificate file asserting the deterministic bounds on every trace. The
equivalent shell commands:

    riskcal run config.json --trials 3 --out results/
    riskcal sweep config.json --param controller.gamma --grid 0.025 0.05 0.1
"""

import json
import pathlib
import tempfile

from riskcal.experiment import run_experiment, sweep

config = {
    "schema_version": 1,
    "steps": 4000,
    "trials": 3,
    "seed": 0,
    "eval_window": [1001, 4000],
    "val_window": [501, 1000],
    "stream": {"kind": "known_quantile"},
    "model": {"kind": "oracle"},
    "constructor": {"kind": "cqr"},
    "losses": [{"kind": "binary", "r": 0.1}],
    "stretch": {"kind": "none"},
    "controller": {"kind": "single", "gamma": 0.05, "m": -2.0, "M": 2.0,
                   "B": 1.0},
}

with tempfile.TemporaryDirectory() as out:
    result = run_experiment(config, out)
    print("artifacts:", sorted(p.name for p in pathlib.Path(out).iterdir()))
    print("aggregate coverage:",
          json.dumps(result.aggregate["coverage"], indent=2))
    print("certificate:", "PASS" if result.certificate_passed else "FAIL")

    selection = sweep(config, "controller.gamma", [0.025, 0.05, 0.1],
                      out_dir=out + "/sweep")
    print("\nsweep selected gamma =", selection["selected"])
    for row in selection["ranking"]:
        print(f"  gamma={row['value']:<6} val_pinball={row['val_pinball']:.4f} "
              f"coverage={row['coverage']:.4f}")
