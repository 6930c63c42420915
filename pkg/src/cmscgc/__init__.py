"""Contrastive multi-view graph-convolutional subspace clustering for hyperspectral scenes."""
from .errors import (CmscgcError, ConfigError, ContractError, DataError, DivergenceError,
                     FormatError, NumericError, PaletteError, ParameterError, RangeError)
from .gcn_encoder import ContrastiveConfig, Embeddings, contrastive_loss, gcn_forward, train
from .graph_build import GraphView, build_graph, knn_adjacency, renormalize
from .hsi_store import (HsiCube, SampleSet, SceneCrop, crop_scene, extract_samples, load_cube,
                        save_cube, synth_multiview)
from .metrics import MetricReport, acc, evaluate, export_map, hungarian_match, kappa, nmi
from .pipeline import (ABLATION_CASES, PRESETS, PipelineConfig, execute, run_ablation,
                       run_pipeline, run_sweep, synth_config)
from .spectral_cluster import ClusterResult, cluster, kmeans, spectral_embed
from .subspace import (attention_weights, build_affinity, fuse_affinities, optimize_attention,
                       solve_self_expression)
from .views import EmpConfig, ViewFeatures, build_views, emp_texture, extract_patches

__version__ = "0.1.0"
