"""
A small threshold sweep
=======================

Local checks under phenomenological noise, a few thousand shots per point.
"""

import json
from pathlib import Path

from dynchecks import harness

cfg_path = Path(__file__).with_name("sweep_local.json")
configs = harness.load_configs(cfg_path)
print(json.dumps(configs[0].to_dict(), indent=1))

csv_path, manifest = harness.sweep_report(configs, Path("results_demo"))
print(csv_path.read_text())

rates = harness.read_rates_csv(csv_path)["local"]
print("pairwise crossings", [round(x, 4) for x in harness.pairwise_crossings(rates)])
print("crossing estimate ", round(harness.crossing_estimate(rates), 4))
try:
    fit = harness.fit_threshold(rates)
    print(f"fit p_th {fit.p_th:.4f} +- {fit.p_th_err:.4f}, mu {fit.mu:.2f}")
except harness.FitFailure as exc:
    print("fit failed:", exc, exc.diagnostics)
