"""
Fisher information over diffusion parameters
============================================

Treat the powered diffusion operator as a distribution that depends on the
diffusion time t and the kernel bandwidth sigma, and map the volume element of
the resulting 2 x 2 Fisher information over a grid of (t, sigma).
"""

import numpy as np

from fimkit.data import gen_tree
from fimkit.paramscan import fim_params, volume_grid

# a tree with long branches so sigma in [50, 150] spans local to global scales
cloud = gen_tree(5, 60, 4, 0.2, seed=3, branch_length=10.0).subsample(50, seed=0)

print("FIM at t=2, sigma=80:")
print(fim_params(cloud, 2.0, 80.0))

grid = volume_grid(cloud, (1.0, 15.0), (50.0, 150.0), t_steps=8, sigma_steps=8)
print("failed cells:", len(grid.failures))

np.set_printoptions(precision=3, linewidth=120)
print("sigma:", grid.sigma_values)
for t, row in zip(grid.t_values, grid.volume):
    print("t=%5.2f" % t, row)

i, j = np.unravel_index(np.nanargmax(grid.volume), grid.volume.shape)
print("largest volume at t=%.2f, sigma=%.1f" % (grid.t_values[i], grid.sigma_values[j]))
