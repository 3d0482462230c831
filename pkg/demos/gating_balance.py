# %% [markdown]
# # How evenly does random-projection hashing spread tokens?
#
# The router here is untrained.  Each token is projected onto a few random
# Gaussian directions and the sign pattern picks its expert.  For isotropic
# inputs every sign pattern is equally likely, so loads should come out
# close to uniform.  This script measures how close, and how the answer
# depends on the hidden size.

# %%
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from moesched import GatingModel, route_tokens
from moesched.gating import gaussian_tokens
from moesched.verification import gating_balance

# %%
model = GatingModel(projection_seed=0, n_hash_bits=5, hidden_dim=256)
workload = route_tokens(model, gaussian_tokens(100_000, 256, seed=1), n_experts=32)
counts = np.asarray(workload.token_counts)
print("tokens per expert: min", counts.min(), "max", counts.max(), "mean", counts.mean())

# %%
# With only a handful of hidden dimensions the random hyperplanes are far
# from orthogonal, so some sign patterns are much rarer than others.
for hidden_dim in (16, 64, 256, 1024):
    ratios = gating_balance(100_000, 32, 5, hidden_dim, range(5))
    print(f"hidden_dim={hidden_dim:5d} worst max/mean over 5 seeds: {max(ratios):.3f}")

# %%
fig, ax = plt.subplots(figsize=(7, 3))
ax.bar(np.arange(32), counts)
ax.axhline(counts.mean(), color="k", ls="--", lw=1, label="mean")
ax.set_xlabel("expert")
ax.set_ylabel("tokens")
ax.legend()
fig.tight_layout()
out = Path(__file__).with_name("figures")
out.mkdir(exist_ok=True)
fig.savefig(out / "gating_balance.png", dpi=120)
