# coding: utf-8

# # Comparing methods
#
# Synthetic traces stand in for real runs here: an "explorer" that samples
# uniformly and an "exploiter" that stays near one point.

# In[1]:

import tempfile
from pathlib import Path

import numpy as np

from boexplore import OE_REVERSED, ObservationTrace, aggregate_normalized_otsd, emit_plot_data, mean_relative_ranking, oe_series, verify_otsd_bound
from boexplore.analysis import group_traces, running_best, uniform_bound_study


def fake_run(af, bench, seed, spread, d=4, n=60):
    rng = np.random.default_rng([seed, len(af), len(bench)])
    pts = np.clip(0.5 + spread * (rng.random((n, d)) - 0.5), 0, 1)
    vals = -np.sum((pts - 0.3) ** 2, axis=1)
    return ObservationTrace(pts, vals, {"benchmark": bench, "af": af, "seed": seed, "dim": d, "doe": 1})


traces = [fake_run(af, b, s, spread)
          for af, spread in [("explorer", 1.0), ("exploiter", 0.2)]
          for b in ("p1", "p2") for s in range(5)]
grouped = group_traces(traces)


# Normalized OTSD, averaged over seeds within each problem and then across
# problems, with a standard error.

# In[2]:

agg = aggregate_normalized_otsd(grouped, with_sem=True)
for m, (mean, sem) in agg.items():
    print(f"{m:9s} terminal {mean[-1]:.4f} +/- {sem[-1]:.4f}")


# Rankings: the method with the larger entropy gets the larger rank under
# OE_REVERSED; ties share the average rank.

# In[3]:

oe_means = {b: {m: np.mean([oe_series(t).values for t in grouped[m][b]], axis=0) for m in grouped}
            for b in ("p1", "p2")}
print("OE ranks   ", mean_relative_ranking(oe_means, OE_REVERSED).terminal())

perf = {b: {m: np.mean([running_best(t) for t in grouped[m][b]], axis=0) for m in grouped}
        for b in ("p1", "p2")}
print("performance", mean_relative_ranking(perf).terminal())


# The bound check: a normalized OTSD of 1 is never reached by uniform
# traces; values at or above 2 are flagged as violations.

# In[4]:

rep = uniform_bound_study([3, 10], 300, 5)
for d, (mx, term) in rep.by_dim().items():
    print(f"d={d}: max {mx:.3f}")
print("synthetic traces ok:", verify_otsd_bound(traces).ok)


# Plot data: a wide CSV plus a self-contained SVG.

# In[5]:

out = Path(tempfile.mkdtemp(prefix="boexplore-plot-"))
written = emit_plot_data({m: v[0] for m, v in agg.items()}, out / "otsd.csv",
                         title="normalized OTSD", ylabel="OTSD / psi", sem={m: v[1] for m, v in agg.items()})
print([p.name for p in written])
