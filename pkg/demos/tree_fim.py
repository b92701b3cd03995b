"""
Fisher information on a branching tree
======================================

Build a noisy five-branch tree, turn it into a diffusion operator, embed the
operator's rows with MDS on Jensen-Shannon distances, train a small network to
reproduce that embedding, and read the Fisher information off the network.
Points where branches meet should carry larger trace and volume than points
near the leaves.
"""

import numpy as np

from fimkit.data import add_noise, gen_tree, tree_landmarks, tree_regions
from fimkit.diffusion import KernelConfig, diffuse, matrix_power
from fimkit.fim import fim_field
from fimkit.mds import phate_jsd_targets
from fimkit.nn import TrainConfig, train

# 5 branches x 60 points in 4 dimensions
cloud = gen_tree(5, 60, 4, 0.02, seed=3)
cloud = add_noise(cloud, 0.001, seed=11)

# row-stochastic operator with adaptive bandwidths, then a long random walk
op = diffuse(cloud, KernelConfig(kind="adaptive-gaussian", knn=10))
Pt = matrix_power(op, 60)

# 20-dimensional MDS targets, one per point
targets = phate_jsd_targets(Pt, k=20)
print("MDS stress %.3g after %d iterations" % (targets.stress, targets.iterations))

# encoder 4 -> 100 -> 70 -> 20 with a softmax output
mlp, losses = train(cloud, targets, [100, 70, 20], TrainConfig(learning_rate=1e-4, epochs=150))
print("loss: epoch 1 %.4f, epoch %d %.4f" % (losses[0], len(losses), losses[-1]))

field = fim_field(mlp, cloud)

# compare the neighbourhoods of junctions with the points closest to the leaves
junctions, tips = tree_landmarks(5, 60, 4, seed=3)
near_junction, near_tip = tree_regions(cloud.points, junctions, tips)
for name, values in (("trace", field.trace), ("volume", field.volume)):
    print("%-6s junction %.4g   tip %.4g" % (name, values[near_junction].mean(), values[near_tip].mean()))

# per-branch summary of the largest eigenvalue
for b in range(5):
    top = field.eigenvalues[cloud.labels == b, 0]
    print("branch %d: median top eigenvalue %.4g" % (b, np.median(top)))
