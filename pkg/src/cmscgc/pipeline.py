"""End-to-end runs: scene -> views -> graphs -> encoders -> affinities -> clusters."""
from __future__ import annotations

import contextlib
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import CmscgcError, ConfigError, ParameterError
from .gcn_encoder import ContrastiveConfig, train
from .graph_build import build_graph, dump_edges
from .hsi_store import SceneCrop, crop_scene, extract_samples, load_cube, synth_multiview
from .metrics import MetricReport, evaluate, export_map
from .spectral_cluster import ClusterResult, cluster
from .subspace import (build_affinity, embedding_dictionary, mean_fusion, optimize_attention,
                       raw_dictionary, solve_self_expression, unit_scale)
from .views import SPECTRAL_SPATIAL, TEXTURE, VIEW_IDS, EmpConfig, build_views

log = logging.getLogger(__name__)

# Sub-scene windows (half-open) and per-dataset w / k / lambda.
PRESETS = {
    "indian_pines": {"crop": [30, 115, 24, 94], "w": 11, "k": 25, "lambda": 100.0, "n_clusters": 4},
    "pavia_university": {"crop": [150, 350, 100, 200], "w": 11, "k": 30, "lambda": 1000.0,
                         "n_clusters": 8},
    "houston": {"crop": [0, 349, 0, 680], "w": 11, "k": 25, "lambda": 1000.0, "n_clusters": 12},
    "xu_zhou": {"crop": [0, 100, 0, 260], "w": 7, "k": 35, "lambda": 100.0, "n_clusters": 5},
}

SYNTH_KEYS = ("n_clusters", "nodes_per_cluster", "ambient_dim", "subspace_dim", "noise_sigma",
              "seed")

ABLATION_CASES = {
    1: {"views": [TEXTURE], "contrastive": False, "fusion": "mean"},
    2: {"views": [SPECTRAL_SPATIAL], "contrastive": False, "fusion": "mean"},
    3: {"views": [SPECTRAL_SPATIAL, TEXTURE], "contrastive": False, "fusion": "mean"},
    4: {"views": [SPECTRAL_SPATIAL, TEXTURE], "contrastive": True, "fusion": "mean"},
    5: {"views": [SPECTRAL_SPATIAL, TEXTURE], "contrastive": True, "fusion": "attention"},
}

SWEEP_PARAMS = {"lambda": float, "k": int, "w": int}


@dataclass
class PipelineConfig:
    manifest: str | None = None
    synth: dict | None = None
    preset: str | None = None
    crop: list | None = None
    w: int = 11
    k: int = 25
    lam: float = 100.0
    tau: float = 0.5
    epochs: int = 200
    learning_rate: float = 1e-3
    pca_dims: int = 8
    emp: dict = field(default_factory=lambda: {"n_pcs": 4, "radii": [1, 2, 3, 4]})
    hidden: int = 64
    embed: int = 32
    n_clusters: int | None = None
    seed: int = 0
    fusion: str = "attention"
    views: list = field(default_factory=lambda: list(VIEW_IDS))
    contrastive: bool = True
    attention_steps: int = 100
    attention_lr: float = 1e-2
    exclude_self_negatives: bool = False
    output_activation: str = "linear"
    normalize_dictionary: bool = True
    raw_dictionary: bool = False
    zero_diagonal: bool = False
    kmeans_restarts: int = 10
    output_dir: str | None = None
    dump_affinity: bool = False
    dump_graphs: bool = False

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        """Resolve defaults, then the named preset, then explicit keys."""
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {_json_key(f.name) for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        merged = {}
        preset = raw.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            merged.update(PRESETS[preset])
        merged.update(raw)
        cfg = cls(**{_field_name(k): v for k, v in merged.items()})
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if isinstance(raw, dict) and isinstance(raw.get("manifest"), str):
            base = os.path.dirname(os.path.abspath(path))
            raw["manifest"] = os.path.join(base, raw["manifest"])
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {_json_key(f.name): getattr(self, f.name) for f in dataclasses.fields(self)}

    def replace(self, **changes) -> "PipelineConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if (self.manifest is None) == (self.synth is None):
            raise ConfigError("exactly one of 'manifest' or 'synth' is required")
        if self.synth is not None:
            if not isinstance(self.synth, dict) or sorted(self.synth) != sorted(SYNTH_KEYS):
                raise ConfigError(f"'synth' needs exactly the keys {list(SYNTH_KEYS)}")
        if not self.views or len(set(self.views)) != len(self.views) or (
                set(self.views) - set(VIEW_IDS)):
            raise ConfigError(f"views must be a non-empty subset of {list(VIEW_IDS)}")
        if len(self.views) == 1:
            self.contrastive = False
        if self.fusion not in ("attention", "mean"):
            raise ConfigError(f"fusion must be 'attention' or 'mean', got {self.fusion!r}")
        if self.crop is not None and len(self.crop) != 4:
            raise ConfigError("crop is [row_start, row_end, col_start, col_end]")
        checks = [
            (self.w >= 1 and self.w % 2 == 1, "w must be a positive odd integer"),
            (self.k >= 1, "k must be >= 1"),
            (self.lam > 0, "lambda must be > 0"),
            (self.tau > 0, "tau must be > 0"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.attention_steps >= 0, "attention_steps must be >= 0"),
            (self.pca_dims >= 1, "pca_dims must be >= 1"),
            (self.n_clusters is None or self.n_clusters >= 2, "n_clusters must be >= 2"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            self.emp_config()
            self.contrastive_config()
        except (ParameterError, TypeError) as exc:
            raise ConfigError(f"bad emp/encoder settings: {exc}") from exc

    def emp_config(self) -> EmpConfig:
        return EmpConfig(**self.emp)

    def contrastive_config(self) -> ContrastiveConfig:
        return ContrastiveConfig(tau=self.tau, epochs=self.epochs,
                                 learning_rate=self.learning_rate, hidden=self.hidden,
                                 embed=self.embed, seed=self.seed,
                                 exclude_self=self.exclude_self_negatives,
                                 output_activation=self.output_activation)


def _json_key(name):
    return "lambda" if name == "lam" else name


def _field_name(key):
    return "lam" if key == "lambda" else key


@contextlib.contextmanager
def _stage(name):
    try:
        yield
    except CmscgcError as exc:
        if exc.stage is None:
            exc.stage = name
            exc.args = (f"[{name}] {exc.args[0] if exc.args else ''}",) + exc.args[1:]
        raise


@dataclass
class RunArtifacts:
    """Everything a run produced, for inspection beyond the headline metrics."""

    config: PipelineConfig
    cluster: ClusterResult
    report: MetricReport
    truth: np.ndarray
    positions: np.ndarray
    shape: tuple
    graphs: list
    affinities: list
    fused: np.ndarray
    attention: np.ndarray
    loss_history: list


def load_scene(cfg: PipelineConfig):
    if cfg.manifest is not None:
        cube = load_cube(cfg.manifest)
    else:
        _, cube = synth_multiview(**cfg.synth)
    if cfg.crop is not None:
        cube = crop_scene(cube, SceneCrop(*cfg.crop))
    return cube


def execute(cfg: PipelineConfig) -> RunArtifacts:
    """Run every stage in memory; nothing is written to disk."""
    with _stage("load"):
        cube = load_scene(cfg)
        samples = extract_samples(cube)
        n_clusters = cfg.n_clusters or cube.n_clusters
    with _stage("views"):
        views = build_views(cube, samples, cfg.w, cfg.pca_dims, cfg.emp_config(), cfg.views)
    with _stage("graph"):
        graphs = [build_graph(v, cfg.k) for v in views]

    history = []
    with _stage("encoder"):
        if cfg.contrastive:
            state, embeddings = train(views, graphs, cfg.contrastive_config())
            history = list(state.loss_history)
        if cfg.contrastive and not cfg.raw_dictionary:
            pairs = [embedding_dictionary(e) for e in embeddings]
        else:
            pairs = [raw_dictionary(v, g.A_hat) for v, g in zip(views, graphs)]
        if cfg.normalize_dictionary:
            pairs = [unit_scale(Z, target) for Z, target in pairs]

    with _stage("subspace"):
        Ys = []
        for v, (Z, target) in zip(views, pairs):
            se = solve_self_expression(Z, target, cfg.lam, zero_diagonal=cfg.zero_diagonal,
                                       view_id=v.view_id)
            Ys.append(build_affinity(se))
        if len(Ys) == 1 or cfg.fusion == "mean":
            bundle = mean_fusion(Ys)
        else:
            bundle = optimize_attention([Z for Z, _ in pairs], [t for _, t in pairs], Ys,
                                        steps=cfg.attention_steps, lr=cfg.attention_lr,
                                        seed=cfg.seed, lam=cfg.lam)
    with _stage("cluster"):
        result = cluster(bundle.Y_F, n_clusters, seed=cfg.seed, restarts=cfg.kmeans_restarts)
    with _stage("metrics"):
        report = evaluate(samples.truth, result.labels)
    log.info("run done: acc=%.4f nmi=%.4f kappa=%.4f", report.acc, report.nmi, report.kappa)
    return RunArtifacts(config=cfg, cluster=result, report=report, truth=samples.truth,
                        positions=samples.positions, shape=(cube.height, cube.width),
                        graphs=graphs, affinities=Ys, fused=bundle.Y_F, attention=bundle.a,
                        loss_history=history)


def metrics_json(report: MetricReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def write_outputs(run: RunArtifacts, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(metrics_json(run.report))
    manifest = run.config.to_dict()
    manifest["output_dir"] = None
    with open(os.path.join(out_dir, "run_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "loss.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(run.loss_history):
            fh.write(f"{epoch},{loss!r}\n")
    h, w = run.shape
    # predicted raster in the truth-label layout: cluster id + 1, 0 = unlabelled
    raster = np.zeros((h, w), dtype="<u2")
    rows, cols = np.asarray(run.positions).T
    raster[rows, cols] = np.asarray(run.cluster.labels) + 1
    raster.tofile(os.path.join(out_dir, "labels.u16"))
    export_map(run.cluster, run.positions, h, w, os.path.join(out_dir, "cluster_map.ppm"))
    if run.config.dump_affinity:
        dump_matrix(run.fused, os.path.join(out_dir, "affinity"))
    if run.config.dump_graphs:
        for view_id, g in zip(run.config.views, run.graphs):
            dump_edges(g.A, os.path.join(out_dir, f"graph_{view_id}.txt"))


def dump_matrix(M, stem) -> None:
    """Row-major float64 little-endian payload plus a JSON shape sidecar."""
    M = np.ascontiguousarray(M, dtype="<f8")
    M.tofile(f"{stem}.f64")
    with open(f"{stem}.json", "w", encoding="utf-8") as fh:
        json.dump({"shape": list(M.shape), "dtype": "f64le", "order": "row-major"}, fh)
        fh.write("\n")


def run_pipeline(cfg: PipelineConfig):
    """Execute ``cfg``; write outputs when ``cfg.output_dir`` is set."""
    run = execute(cfg)
    if cfg.output_dir:
        write_outputs(run, cfg.output_dir)
    return run.cluster, run.report


def ablation_config(cfg: PipelineConfig, case: int) -> PipelineConfig:
    if case not in ABLATION_CASES:
        raise ConfigError(f"ablation case must be one of {sorted(ABLATION_CASES)}, got {case}")
    changes = dict(ABLATION_CASES[case])
    changes["views"] = list(changes["views"])
    if cfg.output_dir:
        changes["output_dir"] = os.path.join(cfg.output_dir, f"case_{case}")
    return cfg.replace(**changes)


def run_ablation(cfg: PipelineConfig, case: int) -> MetricReport:
    return run_pipeline(ablation_config(cfg, case))[1]


def run_sweep(cfg: PipelineConfig, param: str, values) -> str:
    """One run per value; returns CSV text ``value,acc,nmi,kappa``.

    A failing run keeps its row with ``failed`` in the metric columns.
    """
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {sorted(SWEEP_PARAMS)}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    cast = SWEEP_PARAMS[param]
    lines = ["value,acc,nmi,kappa"]
    for raw in values:
        value = cast(raw)
        try:
            run_cfg = cfg.replace(**{_field_name(param): value})
            if cfg.output_dir:
                run_cfg = run_cfg.replace(output_dir=os.path.join(cfg.output_dir,
                                                                  f"{param}_{value}"))
            _, report = run_pipeline(run_cfg)
            lines.append(f"{value},{report.acc!r},{report.nmi!r},{report.kappa!r}")
        except CmscgcError as exc:
            log.warning("sweep %s=%s failed: %s", param, value, exc)
            lines.append(f"{value},failed,failed,failed")
    return "\n".join(lines) + "\n"


def synth_config(n_clusters=3, nodes_per_cluster=100, ambient_dim=12, subspace_dim=3,
                 noise_sigma=0.01, seed=0, **overrides) -> PipelineConfig:
    """Config for the synthetic benchmark with settings sized for its small scene."""
    raw = {
        "synth": {"n_clusters": n_clusters, "nodes_per_cluster": nodes_per_cluster,
                  "ambient_dim": ambient_dim, "subspace_dim": subspace_dim,
                  "noise_sigma": noise_sigma, "seed": seed},
        "seed": seed,
    }
    raw.update(SYNTH_DEFAULTS)
    raw.update(overrides)
    return PipelineConfig.from_dict(raw)


# chosen on synthetic seeds 10-14; the relu output head keeps per-cluster
# structure that a linear head blurs at this scale
SYNTH_DEFAULTS = {"w": 5, "k": 10, "lambda": 0.3, "pca_dims": 8, "output_activation": "relu"}
