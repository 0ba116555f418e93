# coding: utf-8

# # Acquisition functions
#
# Closed forms first, then maximization over the cube, trust regions, RAASP
# candidates and batches.

# In[1]:

import numpy as np

from boexplore import AcquisitionSpec, batch_select, ei, evaluate, fit, kg, maximize_af, pi, sample_max_values, ucb
from boexplore.acquisition import full_bounds, raasp_candidates, tr_bounds, tr_init, tr_update

print("EI ", ei(0.0, 1.0, 0.0))    # 1/sqrt(2 pi)
print("PI ", pi(0.0, 1.0, 0.0))    # one half
print("UCB", ucb(0.0, 4.0, beta=1.0))


# A model on a few Hartmann-6 evaluations.

# In[2]:

rng = np.random.default_rng(0)
X = rng.random((20, 6))
y = evaluate("hartmann6", X)
model = fit(X, y, seed=0)

for spec in [AcquisitionSpec("EI"), AcquisitionSpec("PI"), AcquisitionSpec("UCB", beta=0.1),
             AcquisitionSpec("UCB", beta=5.0), AcquisitionSpec("MES"), AcquisitionSpec("TS")]:
    x = maximize_af(model, spec, full_bounds(6), np.random.default_rng(1))
    print(f"{spec.label:8s} picks a point at distance {np.linalg.norm(x - X[np.argmax(y)]):.3f} "
          "from the incumbent")


# MES needs samples of the maximum; KG averages over fantasized observations.

# In[3]:

print("max-value samples:", np.round(sample_max_values(model, n_samples=5, seed=0), 3))
print("KG at the incumbent:", kg(model, X[np.argmax(y)], seed=0))


# RAASP candidates copy the incumbent and resample a random subset of its
# coordinates; the rest are plain uniform draws (all coordinates differ).

# In[4]:

center = np.full(40, 0.5)
cands = raasp_candidates(center, 5, 40, np.random.default_rng(2))
print("coordinates moved per candidate (d = 40):", (cands != center).sum(axis=1))


# A trust region shrinks after repeated failures and grows after successes.

# In[5]:

state = tr_init(6, 1, center=X[np.argmax(y)])
for _ in range(8):
    state = tr_update(state, improved=False)
print("side length after 8 failures:", state.length)
lo, hi = tr_bounds(state, model.params.lengthscales)
print("box widths:", np.round(hi - lo, 3))


# Batches are built greedily, each pending point treated as observed at its
# posterior mean.

# In[6]:

batch = batch_select(model, AcquisitionSpec("EI", q=4), full_bounds(6), 4, np.random.default_rng(3))
print(np.round(batch, 2))
