# coding: utf-8

# # Measuring how spread out a set of observations is
#
# Two numbers summarize where an optimizer has looked: the length of a short
# closed tour through its observed points (OTSD), and a nearest-neighbour
# entropy estimate (OE). Both are computed for every prefix of a trace.

# In[1]:

import numpy as np

from boexplore import ObservationTrace, exact_tsp, oe, oe_series, otsd_normalized, otsd_series, psi_bound

rng = np.random.default_rng(0)


# A trace is an ordered array of points in the unit cube plus their values.
# The values play no role in the metrics.

# In[2]:

spread = ObservationTrace(rng.random((200, 4)), np.zeros(200))
clumped = ObservationTrace(0.5 + 0.02 * rng.standard_normal((200, 4)).clip(-20, 20) / 20,
                           np.zeros(200))

print("terminal OTSD, spread :", otsd_series(spread).values[-1])
print("terminal OTSD, clumped:", otsd_series(clumped).values[-1])


# The tour is built by cheapest insertion, one point at a time. On small
# instances we can compare it with the brute-force optimum.

# In[3]:

pts = rng.random((8, 3))
heuristic = otsd_series(ObservationTrace(pts, np.zeros(8))).values[-1]
print(f"heuristic {heuristic:.4f}  optimum {exact_tsp(pts):.4f}")


# Dividing by the worst-case tour length `psi_bound(d, t)` puts traces of
# different dimensions on one scale. Uniform random traces sit well below 1.

# In[4]:

print("psi(4, 200) =", psi_bound(4, 200))
norm = otsd_normalized(spread)
print("normalized OTSD at t = 10, 100, 200:", norm.at(10), norm.at(100), norm.at(200))


# Entropy: the estimate for uniform points in the unit square is near 0, and
# for a standard normal sample it is near ln(2 pi e).

# In[5]:

print("uniform square :", oe(rng.random((2000, 2))))
print("standard normal:", oe(rng.standard_normal((2000, 2))), "vs", np.log(2 * np.pi * np.e))

series = oe_series(spread)
print("OE series starts at t =", series.t0, "with", len(series), "values")
