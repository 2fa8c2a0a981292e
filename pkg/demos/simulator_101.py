"""
Synthetic radio maps and device heterogeneity
=============================================

Build one corridor floorplan, read it with the six default phones and look at
how far apart the same location appears to different devices.
"""

import numpy as np

from anvil import radio_sim

# a 30-RP corridor with 60 access points around it
spec = radio_sim.make_floorplan("corridor", n_rp=30, n_ap=60, seed=0)
truth = radio_sim.ground_truth_map(spec, radio_sim.PathLossParams())
print("truth map", truth.shape, "visible share %.2f" % np.mean(truth > -100))

# ten readings per RP for every default device
dbs = radio_sim.generate_dataset(spec, radio_sim.PathLossParams(), radio_sim.DEFAULT_DEVICES, 10, 0)

# mean normalized reading per device: offsets and gains shift the whole vector
for dev, db in dbs.items():
    vis = db.X[db.X > 0]
    print(f"{dev:>6}  mean visible {vis.mean():.3f}  visible share {np.mean(db.X > 0):.2f}")

# the same RP seen by two phones is often farther apart than two RPs on one phone
a, b = dbs["S7"], dbs["BLU"]
same_rp_cross = np.linalg.norm(a.X[a.rp_ids == 5].mean(0) - b.X[b.rp_ids == 5].mean(0))
next_rp_same = np.linalg.norm(a.X[a.rp_ids == 5].mean(0) - a.X[a.rp_ids == 6].mean(0))
print(f"RP 5 on S7 vs BLU: {same_rp_cross:.3f}   RP 5 vs RP 6 on S7: {next_rp_same:.3f}")
