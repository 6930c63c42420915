"""Hyperspectral cube storage, scene cropping, sample extraction and synthetic data.

On disk a cube is a JSON manifest next to two raw payloads::

    {"height": H, "width": W, "bands": B, "dtype": "f32le", "order": "bsq",
     "data": "cube.f32", "labels": "labels.u16"}

``data`` holds ``B*H*W`` little-endian float32 values, band by band, each band
row-major. ``labels`` holds ``H*W`` little-endian uint16 values, row-major, and
may be ``null`` (every pixel unlabeled).
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError, ParameterError, RangeError

MANIFEST_KEYS = ("height", "width", "bands", "dtype", "order", "data", "labels")
_F32 = np.dtype("<f4")
_U16 = np.dtype("<u2")
COEF_CENTRE_NORM = 3.0


@dataclass(frozen=True)
class HsiCube:
    """Reflectance cube held as ``data[row, col, band]`` plus a label map.

    Label 0 marks unlabeled pixels.
    """

    data: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise FormatError(f"cube data must be 3-D, got shape {self.data.shape}")
        if self.labels.shape != self.data.shape[:2]:
            raise FormatError(
                f"label map {self.labels.shape} does not match cube {self.data.shape[:2]}"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def n_clusters(self) -> int:
        return int(np.unique(self.labels[self.labels > 0]).size)


@dataclass(frozen=True)
class SceneCrop:
    """Half-open pixel window ``[row_start, row_end) x [col_start, col_end)``."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def check(self, height: int, width: int) -> None:
        if not (0 <= self.row_start < self.row_end <= height):
            raise RangeError(f"rows [{self.row_start}, {self.row_end}) outside 0..{height}")
        if not (0 <= self.col_start < self.col_end <= width):
            raise RangeError(f"cols [{self.col_start}, {self.col_end}) outside 0..{width}")


@dataclass(frozen=True)
class SampleSet:
    """Labeled pixels of a scene.

    ``features`` is ``bands x N``; column ``i`` is the spectrum at
    ``positions[i] = (row, col)``. ``truth`` holds the (nonzero) labels.
    """

    features: np.ndarray
    positions: np.ndarray
    truth: np.ndarray

    @property
    def n(self) -> int:
        return self.features.shape[1]


def load_cube(manifest_path) -> HsiCube:
    """Read a cube from its JSON manifest. Raw paths resolve relative to it."""
    manifest_path = os.fspath(manifest_path)
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    if not isinstance(meta, dict):
        raise FormatError(f"{manifest_path}: manifest must be a JSON object")
    missing = [k for k in MANIFEST_KEYS if k not in meta]
    extra = sorted(set(meta) - set(MANIFEST_KEYS))
    if missing or extra:
        raise FormatError(f"{manifest_path}: missing keys {missing}, unknown keys {extra}")
    if meta["dtype"] != "f32le":
        raise FormatError(f"unsupported dtype token {meta['dtype']!r}")
    if meta["order"] != "bsq":
        raise FormatError(f"unsupported order token {meta['order']!r}")
    dims = []
    for key in ("height", "width", "bands"):
        v = meta[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise FormatError(f"{key} must be a positive integer, got {v!r}")
        dims.append(v)
    h, w, b = dims

    base = os.path.dirname(os.path.abspath(manifest_path))
    raw = _read_exact(os.path.join(base, meta["data"]), h * w * b, _F32)
    data = raw.reshape(b, h, w).transpose(1, 2, 0).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{meta['data']}: cube contains non-finite values")

    if meta["labels"] is None:
        labels = np.zeros((h, w), dtype=np.int64)
    else:
        labels = _read_exact(os.path.join(base, meta["labels"]), h * w, _U16)
        labels = labels.reshape(h, w).astype(np.int64)
    return HsiCube(data=data, labels=labels)


def _read_exact(path, count, dtype):
    try:
        payload = np.fromfile(path, dtype=np.uint8)
    except FileNotFoundError as exc:
        raise FormatError(f"raw file not found: {path}") from exc
    expected = count * dtype.itemsize
    if payload.size != expected:
        raise FormatError(
            f"{path}: size mismatch, manifest implies {expected} bytes, file has {payload.size}"
        )
    return payload.view(dtype)


def save_cube(cube: HsiCube, manifest_path, data_name=None, labels_name=None,
              with_labels=True) -> None:
    """Write ``cube`` as manifest + raw payloads next to ``manifest_path``."""
    manifest_path = os.fspath(manifest_path)
    stem = os.path.splitext(os.path.basename(manifest_path))[0]
    data_name = data_name or f"{stem}.f32"
    labels_name = labels_name or f"{stem}_labels.u16"
    base = os.path.dirname(os.path.abspath(manifest_path))
    os.makedirs(base, exist_ok=True)

    bsq = np.ascontiguousarray(cube.data.transpose(2, 0, 1), dtype=_F32)
    bsq.tofile(os.path.join(base, data_name))
    if with_labels:
        if cube.labels.min() < 0 or cube.labels.max() > np.iinfo(np.uint16).max:
            raise DataError("labels do not fit in uint16")
        np.ascontiguousarray(cube.labels, dtype=_U16).tofile(os.path.join(base, labels_name))
    meta = {
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "dtype": "f32le",
        "order": "bsq",
        "data": data_name,
        "labels": labels_name if with_labels else None,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def crop_scene(cube: HsiCube, crop: SceneCrop) -> HsiCube:
    crop.check(cube.height, cube.width)
    rows = slice(crop.row_start, crop.row_end)
    cols = slice(crop.col_start, crop.col_end)
    return HsiCube(data=cube.data[rows, cols].copy(), labels=cube.labels[rows, cols].copy())


def extract_samples(cube: HsiCube) -> SampleSet:
    """Collect every nonzero-label pixel in row-major order."""
    mask = cube.labels > 0
    if not mask.any():
        raise DataError("label map has no labeled pixels")
    positions = np.argwhere(mask)
    return SampleSet(
        features=cube.data[mask].T.copy(),
        positions=positions,
        truth=cube.labels[mask].copy(),
    )


def synth_multiview(n_clusters, nodes_per_cluster, ambient_dim, subspace_dim,
                    noise_sigma, seed):
    """Union-of-subspaces data laid out as a cube of square cluster blocks.

    Cluster ``j`` fills an ``s x s`` block (``s = ceil(sqrt(nodes_per_cluster))``)
    placed side by side along the columns. The first ``nodes_per_cluster``
    pixels of each block (row-major) carry label ``j + 1``; the rest of the block
    is drawn from the same subspace but left unlabeled. When the subspaces fit
    they are mutually orthogonal, otherwise each gets an independent random basis.

    Returns ``(samples, cube)`` where ``samples == extract_samples(cube)``.
    """
    if n_clusters < 1 or nodes_per_cluster < 1:
        raise ParameterError("n_clusters and nodes_per_cluster must be >= 1")
    if not 1 <= subspace_dim < ambient_dim:
        raise ParameterError("need 1 <= subspace_dim < ambient_dim")
    if noise_sigma < 0:
        raise ParameterError("noise_sigma must be >= 0")
    rng = np.random.default_rng(seed)

    if n_clusters * subspace_dim <= ambient_dim:
        q, _ = np.linalg.qr(rng.standard_normal((ambient_dim, n_clusters * subspace_dim)))
        bases = [q[:, j * subspace_dim:(j + 1) * subspace_dim] for j in range(n_clusters)]
    else:
        bases = [np.linalg.qr(rng.standard_normal((ambient_dim, subspace_dim)))[0]
                 for _ in range(n_clusters)]

    side = math.ceil(math.sqrt(nodes_per_cluster))
    data = np.empty((side, side * n_clusters, ambient_dim))
    labels = np.zeros((side, side * n_clusters), dtype=np.int64)
    block_labels = np.zeros(side * side, dtype=np.int64)
    for j, basis in enumerate(bases):
        centre = rng.standard_normal(subspace_dim)
        centre *= COEF_CENTRE_NORM / np.linalg.norm(centre)
        coef = centre[:, None] + rng.standard_normal((subspace_dim, side * side))
        pts = basis @ coef + noise_sigma * rng.standard_normal((ambient_dim, side * side))
        data[:, j * side:(j + 1) * side] = pts.T.reshape(side, side, ambient_dim)
        block_labels[:] = 0
        block_labels[:nodes_per_cluster] = j + 1
        labels[:, j * side:(j + 1) * side] = block_labels.reshape(side, side)
    cube = HsiCube(data=data, labels=labels)
    return extract_samples(cube), cube
