# %% [markdown]
# # Overlap versus serial loading as device capacity grows
#
# A full-size expert (4096 x 10240, fp16) takes about 10.5 ms to copy at
# 16 GB/s.  This script takes a skewed token distribution over 32 experts
# and sweeps the number of experts that may wait on the device.  It compares
# three strategies: the scheduled order, the index order, and a serial
# baseline that never overlaps copying with compute.

# %%
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from moesched.scenario import parse_scenario, sweep

base = parse_scenario({
    "name": "capacity-sweep",
    "geometry": {"preset": "cpm2", "bytes_per_param": 2},
    "hardware": {"peak_flops": 1.25e14, "h2d_bandwidth": 1.6e10,
                 "device_memory": 16 * 2**30, "reserved_memory": 8 * 2**30},
    "workload": {"kind": "zipf", "s": 0.8, "total_tokens": 400_000},
    "policies": ["Greedy", "Naive", "Serial"],
    "K": 1,
    "seed": 3,
})

# %%
Ks = list(range(1, 9))
rows = sweep(base, "K", Ks, jobs=1)
series = {}
for row in rows:
    series.setdefault(row["policy"], []).append(row["makespan"] * 1e3)
for policy, values in series.items():
    print(policy.ljust(7), " ".join(f"{v:7.2f}" for v in values), "ms")
print("lower bound", f"{rows[0]['lower_bound'] * 1e3:.2f} ms")

# %%
fig, ax = plt.subplots(figsize=(6, 3.5))
for policy, values in series.items():
    ax.plot(Ks, values, marker="o", label=policy)
ax.axhline(rows[0]["lower_bound"] * 1e3, color="k", ls=":", label="lower bound")
ax.set_xlabel("experts allowed to wait on device (K)")
ax.set_ylabel("makespan (ms)")
ax.legend()
fig.tight_layout()
out = Path(__file__).with_name("figures")
out.mkdir(exist_ok=True)
fig.savefig(out / "capacity_sweep.png", dpi=120)
