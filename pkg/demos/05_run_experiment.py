# coding: utf-8

# # Running an experiment
#
# A config names benchmarks, acquisition functions and seeds; every
# combination is one independent run written to its own JSONL trace.

# In[1]:

import tempfile
from pathlib import Path

import numpy as np

from boexplore import AcquisitionSpec, ExperimentConfig, read_trace, run_experiment

out = Path(tempfile.mkdtemp(prefix="boexplore-demo-"))
cfg = ExperimentConfig(
    benchmarks=["branin2"],
    afs=[AcquisitionSpec("EI"), AcquisitionSpec("UCB", beta=5.0), AcquisitionSpec("RS")],
    seeds=[0, 1],
    doe_size=5,
    budget=25,
    output_dir=str(out),
)
records = run_experiment(cfg, progress=lambda r: print(Path(r.path).name, "best", round(r.trace.values.max(), 3)))


# The first line of a trace is a header; each following line is one
# evaluation.

# In[2]:

first = sorted(out.glob("*.jsonl"))[0]
print(first.read_text().splitlines()[0])
print(first.read_text().splitlines()[1][:100], "...")


# Rerunning with the same config reproduces every byte.

# In[3]:

again = run_experiment(cfg)
print(all(np.array_equal(a.trace.points, b.trace.points) for a, b in zip(records, again)))
print(read_trace(first) == records[0].trace)


# The same matrix can be described in TOML and run with `boexplore run`:
#
#     benchmarks = ["branin2"]
#     seeds = 2
#     doe_size = 5
#     budget = 25
#     [[afs]]
#     kind = "EI"
#     [[afs]]
#     kind = "UCB"
#     beta = 5.0
