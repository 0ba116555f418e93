# coding: utf-8

# # Test problems
#
# Every benchmark is posed as maximization over the unit cube; the native box
# is only used inside `evaluate`.

# In[1]:

import numpy as np

from boexplore import BENCHMARKS, doe, evaluate, get_benchmark
from boexplore.benchmarks import to_unit

for name, b in BENCHMARKS.items():
    print(f"{name:10s} d={b.dim}  box={b.lower[0]}..{b.upper[0]}  best value={b.known_optimum:.4f}")


# The Branin minimizer (pi, 2.275) in native coordinates gives the best value.

# In[2]:

branin = get_benchmark("branin2")
u_star = to_unit(branin, [np.pi, 2.275])
print(evaluate(branin, u_star), "==", branin.known_optimum)


# The initial design depends only on the benchmark and the seed, so every
# optimizer compared under one seed starts from the same points.

# In[3]:

U1, y1 = doe("hartmann6", 10, seed=3)
U2, y2 = doe("hartmann6", 10, seed=3)
print(np.array_equal(U1, U2), y1.round(3))
