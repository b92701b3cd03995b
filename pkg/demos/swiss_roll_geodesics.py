"""
Geodesic lengths on a swiss roll
================================

Learn a Fisher information metric from a sampled swiss roll, pull it back onto
the unrolled (arclength, height) sheet, and train geodesics from one anchor
point to five others. The learned lengths are compared with the exact
distances on the flat sheet.
"""

import numpy as np

from fimkit.cli import run_swiss_roll_geodesics
from fimkit.config import RunConfig

cfg = RunConfig()
cfg.data.kind = "swiss-roll"
cfg.geodesic.preset = "swiss-roll"
cfg.geodesic.metric = "learned-fim"

summary = run_swiss_roll_geodesics(cfg)

print("anchor", summary["anchor"])
for j, learned, exact in zip(summary["partners"], summary["learned_lengths"], summary["oracle_lengths"]):
    print("  to %4d: learned %.4f   exact %.3f" % (j, learned, exact))
print("pearson correlation: %.4f" % summary["correlation"])
print("ratio learned/exact:", np.round(np.array(summary["learned_lengths"]) / summary["oracle_lengths"], 4))
