# coding: utf-8

# # The `boexplore` command
#
# Everything above is also reachable from the shell. This script drives the
# command through `boexplore.cli.main`, which is what the console script
# calls; the exit code is printed after each step.

# In[1]:

import tempfile
from pathlib import Path

from boexplore.cli import main

work = Path(tempfile.mkdtemp(prefix="boexplore-cli-"))
(work / "exp.toml").write_text("""
benchmarks = ["branin2", "levy4"]
seeds = 2
doe_size = 5
budget = 20

[[afs]]
kind = "EI"

[[afs]]
kind = "RS"
""")

print("run:", main(["run", str(work / "exp.toml"), "--out", str(work / "traces")]))


# Metric series for single traces, as CSV.

# In[2]:

one = sorted((work / "traces").glob("*.jsonl"))[0]
print("metrics:", main(["metrics", str(one), "--kind", "otsd-norm", "--out", str(work / "m.csv")]))
print((work / "m.csv").read_text().splitlines()[:3])


# Rankings and averaged curves for the whole directory.

# In[3]:

print("analyze:", main(["analyze", str(work / "traces"), "--rank", "oe", "--out", str(work / "analysis")]))
print(sorted(p.name for p in (work / "analysis").iterdir()))


# Bound verification on the traces, and on fresh uniform traces.

# In[4]:

print("verify-bound:", main(["verify-bound", str(work / "traces")]))
print("verify-bound:", main(["verify-bound", "--random", "10", "500", "5"]))


# Brute-force oracles for the tour heuristic and the entropy estimator.

# In[5]:

print("bench-oracle:", main(["bench-oracle", "--instances", "20"]))


# Mistakes give exit code 2 (bad input) or 3 (unsupported request).

# In[6]:

(work / "bad.toml").write_text('benchmarks = ["nosuch"]\n[[afs]]\nkind = "EI"\n')
print("unknown benchmark:", main(["run", str(work / "bad.toml")]))
