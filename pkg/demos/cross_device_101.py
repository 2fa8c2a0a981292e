"""
Cross-device evaluation in one floorplan
========================================

Train Euclidean KNN and ANVIL on each phone, test on every phone, and print
the offline x online error matrix as markdown.  Uses the shortened experiment
training config; runs in about ten seconds on one CPU.
"""

from anvil import evaluation, radio_sim

spec = radio_sim.make_floorplan("corridor", n_rp=25, n_ap=50, seed=1)
devices = radio_sim.DEFAULT_DEVICES[:3]
dbs = radio_sim.generate_dataset(spec, radio_sim.PathLossParams(), devices, 10, 1)
datasets = evaluation.split_devices(dbs, 8, 2, 1)

cfg = evaluation.experiment_config().with_seed(1)
m = evaluation.cross_device_matrix(["knn-euclid", "anvil"], datasets, 1, spec.floorplan_id, cfg)

print(evaluation.matrix_markdown([m]))
for fw in m.frameworks:
    print(f"{fw}: same-device {m.same_device_mean(fw):.2f} m, cross-device {m.cross_device_mean(fw):.2f} m")
