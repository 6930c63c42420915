"""Clustering metrics and the colour cluster map.

Cluster ids are arbitrary, so predictions are first aligned to the ground
truth with a Hungarian assignment on the contingency table. ACC and kappa
use the aligned labels; NMI is label-permutation invariant by itself.
"""
import tempfile
from pathlib import Path

import numpy as np

from cmscgc import evaluate, export_map, hungarian_match

truth = np.array([1, 1, 1, 2, 2, 2, 3, 3, 3])
pred = np.array([7, 7, 4, 4, 4, 4, 0, 0, 0])
print("alignment:", hungarian_match(truth, pred))
print(evaluate(truth, pred))

positions = np.array([(r, c) for r in range(3) for c in range(3)])
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "map.ppm"
    export_map(np.unique(pred, return_inverse=True)[1], positions, 3, 3, path)
    data = path.read_bytes()
print(f"PPM header {data[:11]!r}, {len(data) - 11} pixel bytes")
