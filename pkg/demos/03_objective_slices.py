"""
Shape of the alignment objective
================================

Slice the objective along each parameter around the true extrinsics and
print a small text plot. A well-behaved objective peaks at offset zero.
"""

import numpy as np

from edgecal import synth
from edgecal.evaluation import SweepSpec, sweep
from edgecal.objective import make_cost
from edgecal.pipeline import extract_features

scene = synth.load_preset("urban")
cfg = synth.config_for_scene(scene).replace(edge_coarse_levels=0)
feats = extract_features(synth.render_lidar(scene), synth.render_camera(scene), scene.camera, scene.theta, cfg)
cost = make_cost(feats.edges, feats.e_c, scene.camera, cfg.match_threshold)
print(f"J at the truth: {cost(scene.theta):.2f} over {feats.edges.n_edge} edge points")

bars = " .:-=+*#%@"
for name in ("rx", "ry", "rz", "tx", "ty", "tz"):
    offsets, values = sweep(cost, scene.theta, SweepSpec(name, 0.3, 61, normalize=True))
    line = "".join(bars[min(int(v * (len(bars) - 1) + 0.5), len(bars) - 1)] for v in values)
    print(f"{name} |{line}| peak at {offsets[np.argmax(values)]:+.2f}")
