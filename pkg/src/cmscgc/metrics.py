"""Clustering scores under optimal label alignment, and cluster-map export."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractError, PaletteError, RangeError

MAX_LABELS = 64

PALETTE = np.array([
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
], dtype=np.uint8)


class MetricWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MetricReport:
    acc: float
    nmi: float
    kappa: float
    mapping: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        return {"acc": self.acc, "nmi": self.nmi, "kappa": self.kappa}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=False)


def _pair(truth, pred):
    truth = np.asarray(truth).ravel()
    pred = np.asarray(pred).ravel()
    if truth.shape != pred.shape:
        raise ContractError(f"label vectors differ in length: {truth.size} vs {pred.size}")
    if truth.size == 0:
        raise ContractError("empty label vectors")
    return truth, pred


def contingency(truth, pred):
    """Counts ``table[i, j]`` of (truth value i, pred value j) plus the value lists."""
    t_vals, t_idx = np.unique(truth, return_inverse=True)
    p_vals, p_idx = np.unique(pred, return_inverse=True)
    table = np.zeros((t_vals.size, p_vals.size), dtype=np.int64)
    np.add.at(table, (t_idx, p_idx), 1)
    return table, t_vals, p_vals


def hungarian_match(truth, pred):
    """Map each predicted label to a truth label, maximising agreements.

    Predicted labels left without a truth partner (more clusters than classes)
    map to fresh values that never occur in ``truth``.
    """
    truth, pred = _pair(truth, pred)
    table, t_vals, p_vals = contingency(truth, pred)
    m = max(table.shape)
    if m > MAX_LABELS:
        raise RangeError(f"at most {MAX_LABELS} distinct labels supported, got {m}")
    square = np.zeros((m, m), dtype=np.int64)
    square[: table.shape[1], : table.shape[0]] = table.T
    rows, cols = linear_sum_assignment(square, maximize=True)
    fresh = int(t_vals.max()) + 1 if np.issubdtype(t_vals.dtype, np.integer) else None
    mapping = {}
    for r, c in zip(rows, cols):
        if r >= p_vals.size:
            continue
        if c < t_vals.size:
            mapping[p_vals[r].item()] = t_vals[c].item()
        else:
            mapping[p_vals[r].item()] = fresh if fresh is not None else f"__unmatched{r}"
            fresh = fresh + 1 if fresh is not None else None
    return mapping


def _aligned(truth, pred):
    mapping = hungarian_match(truth, pred)
    return np.array([mapping[v] for v in pred.tolist()], dtype=object), mapping


def acc(truth, pred):
    truth, pred = _pair(truth, pred)
    aligned, _ = _aligned(truth, pred)
    return float(np.mean(aligned == truth.astype(object)))


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(truth, pred):
    """Mutual information over the geometric mean of the two entropies."""
    truth, pred = _pair(truth, pred)
    table, _, _ = contingency(truth, pred)
    n = table.sum()
    h_t = _entropy(table.sum(axis=1))
    h_p = _entropy(table.sum(axis=0))
    if h_t == 0 or h_p == 0:
        warnings.warn("NMI undefined for a single-cluster partition; returning 0",
                      MetricWarning, stacklevel=2)
        return 0.0
    joint = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    return float(np.clip(mi / np.sqrt(h_t * h_p), 0.0, 1.0))


def aligned_confusion(truth, pred):
    """Confusion matrix (truth x aligned prediction) over the union of classes."""
    truth, pred = _pair(truth, pred)
    aligned, _ = _aligned(truth, pred)
    classes = sorted(set(truth.tolist()))
    known = set(classes)
    classes += [v for v in dict.fromkeys(aligned.tolist()) if v not in known]
    index = {c: i for i, c in enumerate(classes)}
    conf = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth.tolist(), aligned.tolist()):
        conf[index[t], index[p]] += 1
    return conf


def kappa_from_confusion(conf):
    conf = np.asarray(conf, dtype=np.float64)
    n = conf.sum()
    chance = float(np.sum(conf.sum(axis=1) * conf.sum(axis=0)))
    denom = n * n - chance
    if denom == 0:
        warnings.warn("Kappa undefined (zero denominator); returning 0", MetricWarning, stacklevel=2)
        return 0.0
    return float((n * np.trace(conf) - chance) / denom)


def kappa(truth, pred):
    return kappa_from_confusion(aligned_confusion(truth, pred))


def evaluate(truth, pred) -> MetricReport:
    truth, pred = _pair(truth, pred)
    _, mapping = _aligned(truth, pred)
    return MetricReport(acc=acc(truth, pred), nmi=nmi(truth, pred), kappa=kappa(truth, pred),
                        mapping=mapping)


def export_map(result, positions, height, width, path, k=None):
    """Write a binary PPM: cluster ``c`` gets ``PALETTE[c]``, other pixels black.

    ``result`` is a ``ClusterResult`` or a plain label vector with ids in ``[0, k)``.
    """
    labels = np.asarray(getattr(result, "labels", result))
    k = getattr(result, "k", None) if k is None else k
    k = int(labels.max()) + 1 if k is None and labels.size else (k or 0)
    if k > len(PALETTE):
        raise PaletteError(f"{k} clusters exceed the {len(PALETTE)}-colour palette")
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
    if labels.size and (labels.min() < 0 or labels.max() >= len(PALETTE)):
        raise PaletteError("cluster id outside the palette")
    if positions.size and (positions.min() < 0 or positions[:, 0].max() >= height
                           or positions[:, 1].max() >= width):
        raise RangeError("pixel position outside the image")
    img = np.zeros((height, width, 3), dtype=np.uint8)
    img[positions[:, 0], positions[:, 1]] = PALETTE[labels]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
