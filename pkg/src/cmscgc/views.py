"""Per-pixel views of a scene: spectral-spatial patches and EMP texture patches."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from skimage.morphology import dilation, disk, erosion, reconstruction

from .errors import DataError, ParameterError, RangeError
from .hsi_store import HsiCube, SampleSet

SPECTRAL_SPATIAL = "spectral_spatial"
TEXTURE = "texture"
VIEW_IDS = (SPECTRAL_SPATIAL, TEXTURE)


@dataclass(frozen=True)
class ViewFeatures:
    """``X`` is ``d x N``; column ``i`` always refers to sample ``i``."""

    view_id: str
    X: np.ndarray

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class EmpConfig:
    n_pcs: int = 4
    radii: tuple = field(default=(1, 2, 3, 4))

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(int(r) for r in self.radii))
        if self.n_pcs < 1:
            raise ParameterError("EMP needs n_pcs >= 1")
        if not self.radii or self.radii[0] < 1 or any(
            b <= a for a, b in zip(self.radii, self.radii[1:])
        ):
            raise ParameterError(f"EMP radii must be strictly increasing and >= 1, got {self.radii}")

    @property
    def n_layers(self) -> int:
        return self.n_pcs * (2 * len(self.radii) + 1)


def normalize_bands(cube: HsiCube) -> HsiCube:
    """Min-max scale every band to [0, 1]; constant bands become 0."""
    data = cube.data
    if not np.all(np.isfinite(data)):
        raise DataError("cannot normalize a cube with non-finite values")
    lo = data.min(axis=(0, 1))
    span = data.max(axis=(0, 1)) - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (data - lo) / safe, 0.0)
    return HsiCube(data=out, labels=cube.labels)


def pca_reduce(X: np.ndarray, target_dim: int) -> np.ndarray:
    """Project the columns of ``X`` (``d x N``) on the leading principal axes.

    Each axis is signed so that its largest-magnitude loading is positive.
    Returns ``target_dim x N`` scores of the mean-centred data.
    """
    d, n = X.shape
    if not 1 <= target_dim <= min(d, n):
        raise RangeError(f"target_dim {target_dim} not in [1, {min(d, n)}]")
    centred = X - X.mean(axis=1, keepdims=True)
    cov = centred @ centred.T / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:target_dim]
    axes = evecs[:, order]
    pivot = np.abs(axes).argmax(axis=0)
    axes = axes * np.sign(axes[pivot, np.arange(target_dim)])
    return axes.T @ centred


def pca_cube(cube: HsiCube, target_dim: int) -> HsiCube:
    """PCA over all pixels of the scene, returned as a ``target_dim``-band cube."""
    h, w, b = cube.data.shape
    scores = pca_reduce(cube.data.reshape(h * w, b).T, target_dim)
    return HsiCube(data=scores.T.reshape(h, w, target_dim), labels=cube.labels)


def opening_by_reconstruction(image: np.ndarray, radius: int) -> np.ndarray:
    marker = erosion(image, disk(radius), mode="ignore")
    return reconstruction(marker, image, method="dilation")


def closing_by_reconstruction(image: np.ndarray, radius: int) -> np.ndarray:
    marker = dilation(image, disk(radius), mode="ignore")
    return reconstruction(marker, image, method="erosion")


def morphological_profile(image: np.ndarray, radii) -> np.ndarray:
    """Stack ``[closings (largest radius first), image, openings (smallest first)]``."""
    image = np.asarray(image, dtype=np.float64)
    closings = [closing_by_reconstruction(image, r) for r in reversed(radii)]
    openings = [opening_by_reconstruction(image, r) for r in radii]
    return np.stack(closings + [image] + openings, axis=-1)


def emp_texture(cube: HsiCube, cfg: EmpConfig = EmpConfig()) -> HsiCube:
    """Extended morphological profile over the first ``cfg.n_pcs`` components."""
    if cfg.n_pcs > cube.bands:
        raise ParameterError(f"n_pcs={cfg.n_pcs} exceeds {cube.bands} bands")
    pcs = pca_cube(cube, cfg.n_pcs).data
    layers = [morphological_profile(pcs[:, :, i], cfg.radii) for i in range(cfg.n_pcs)]
    return HsiCube(data=np.concatenate(layers, axis=-1), labels=cube.labels)


def extract_patches(cube: HsiCube, samples: SampleSet, w: int,
                    view_id: str = SPECTRAL_SPATIAL) -> ViewFeatures:
    """``w x w`` neighbourhood of every sample, flattened band by band.

    Borders are mirrored with the edge pixel repeated (``np.pad`` symmetric
    mode). Feature index is ``band * w * w + row * w + col`` within the window.
    """
    if w < 1 or w % 2 == 0:
        raise ParameterError(f"patch size must be odd and >= 1, got {w}")
    half = w // 2
    padded = np.pad(cube.data, ((half, half), (half, half), (0, 0)), mode="symmetric")
    windows = sliding_window_view(padded, (w, w), axis=(0, 1))  # H, W, B, w, w
    rows, cols = samples.positions[:, 0], samples.positions[:, 1]
    patches = windows[rows, cols].reshape(len(rows), -1)
    return ViewFeatures(view_id=view_id, X=np.ascontiguousarray(patches.T))


def build_views(cube: HsiCube, samples: SampleSet, w: int, pca_dims: int = 8,
                emp: EmpConfig = EmpConfig(), views=VIEW_IDS) -> list:
    """Normalise the scene once and produce the requested views, in ``views`` order."""
    unknown = set(views) - set(VIEW_IDS)
    if unknown:
        raise ParameterError(f"unknown views {sorted(unknown)}")
    norm = normalize_bands(cube)
    out = []
    for view_id in views:
        if view_id == SPECTRAL_SPATIAL:
            source = pca_cube(norm, pca_dims)
        else:
            source = emp_texture(norm, emp)
        out.append(extract_patches(source, samples, w, view_id=view_id))
    return out
