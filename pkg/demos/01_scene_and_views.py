"""Build a synthetic scene, save and reload it, and turn it into two views.

Each labelled pixel becomes one node. The spectral-spatial view stacks a
w x w patch of PCA-reduced bands; the texture view stacks a patch of the
extended morphological profile (openings/closings by reconstruction).
"""
import tempfile
from pathlib import Path

import numpy as np

from cmscgc import EmpConfig, build_views, extract_samples, load_cube, save_cube, synth_multiview

# 3 clusters of 40 nodes drawn from 2-dim subspaces of a 10-dim band space
samples, cube = synth_multiview(3, 40, 10, 2, noise_sigma=0.01, seed=0)
print(f"cube {cube.height}x{cube.width}x{cube.bands}, {samples.n} labelled pixels")

# the on-disk container: JSON manifest + raw BSQ float32 + uint16 labels
with tempfile.TemporaryDirectory() as tmp:
    manifest = Path(tmp) / "scene.json"
    save_cube(cube, manifest)
    print("container files:", sorted(p.name for p in Path(tmp).iterdir()))
    again = load_cube(manifest)
# the container stores float32
assert np.array_equal(again.data, cube.data.astype(np.float32))

samples = extract_samples(again)
views = build_views(again, samples, w=5, pca_dims=4, emp=EmpConfig(n_pcs=2, radii=(1, 2, 3)))
for v in views:
    print(f"{v.view_id:17s} d={v.d:4d} N={v.n}")
