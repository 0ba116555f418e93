# coding: utf-8

# # The Gaussian process surrogate
#
# Matern-5/2 kernel with one lengthscale per input, fitted by maximizing the
# log marginal likelihood from several starting points.

# In[1]:

import numpy as np

from boexplore import evaluate, fit, predict, sample_posterior_function

rng = np.random.default_rng(1)
X = rng.random((25, 2))
y = evaluate("branin2", X)

model = fit(X, y, seed=0)
p = model.params
print("lengthscales", np.round(p.lengthscales, 3), "signal var", round(p.signal_variance, 3),
      "noise var", p.noise_variance)


# Predictions are returned on the original scale of the targets.

# In[2]:

test = rng.random((5, 2))
mu, var = predict(model, test)
print(np.c_[evaluate("branin2", test), mu, np.sqrt(var)].round(2))


# Adding one observation is a rank-one update; hyperparameters stay fixed.

# In[3]:

x_new = np.array([0.5, 0.5])
updated = model.condition_on(x_new, evaluate("branin2", x_new))
print("variance at x_new before", predict(model, x_new)[1], "after", predict(updated, x_new)[1])


# Whole functions can be drawn from the posterior (random Fourier features
# plus a data correction). The same seed gives the same function. Averaged
# over many seeds the draws recover the posterior mean.

# In[4]:

grid = rng.random((1000, 2))
draws = np.stack([sample_posterior_function(model, s)(grid) for s in range(200)])
m, v = predict(model, grid[:3])
print("MC mean", draws[:, :3].mean(0).round(2), "exact", m.round(2))
