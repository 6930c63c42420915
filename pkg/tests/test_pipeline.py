import json
import os

import numpy as np
import pytest

from cmscgc import cli
from cmscgc.errors import ConfigError
from cmscgc.hsi_store import save_cube, synth_multiview
from cmscgc.pipeline import (ABLATION_CASES, PRESETS, PipelineConfig, ablation_config, execute,
                             run_ablation, run_pipeline, run_sweep, synth_config)

# small and quick: every stage runs, nothing is tuned
FAST = {"epochs": 5, "hidden": 16, "embed": 8, "attention_steps": 5, "kmeans_restarts": 2,
        "emp": {"n_pcs": 2, "radii": [1, 2]}, "pca_dims": 4}


def fast_config(**overrides):
    opts = dict(FAST)
    opts.update(overrides)
    return synth_config(n_clusters=3, nodes_per_cluster=25, ambient_dim=8, subspace_dim=2,
                        seed=opts.pop("seed", 7), **opts)


def test_presets_resolve():
    base = {"synth": {"n_clusters": 2, "nodes_per_cluster": 4, "ambient_dim": 4,
                      "subspace_dim": 1, "noise_sigma": 0.0, "seed": 0}}
    ip = PipelineConfig.from_dict({**base, "preset": "indian_pines"})
    assert (ip.w, ip.k, ip.lam, ip.crop, ip.n_clusters) == (11, 25, 100.0, [30, 115, 24, 94], 4)
    xz = PipelineConfig.from_dict({**base, "preset": "xu_zhou"})
    assert (xz.w, xz.k, xz.lam) == (7, 35, 100.0)
    assert {p: (v["w"], v["k"], v["lambda"]) for p, v in PRESETS.items()} == {
        "indian_pines": (11, 25, 100.0), "pavia_university": (11, 30, 1000.0),
        "houston": (11, 25, 1000.0), "xu_zhou": (7, 35, 100.0)}
    # explicit keys win over the preset
    assert PipelineConfig.from_dict({**base, "preset": "houston", "k": 9}).k == 9


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"preset": "mars"},
    {"views": []},
    {"views": ["texture", "texture"]},
    {"views": ["hyper"]},
    {"fusion": "max"},
    {"w": 4},
    {"lambda": 0},
    {"tau": -1},
    {"emp": {"n_pcs": 0, "radii": [1]}},
    {"output_activation": "tanh"},
])
def test_invalid_configs_rejected(raw):
    base = {"synth": {"n_clusters": 2, "nodes_per_cluster": 4, "ambient_dim": 4,
                      "subspace_dim": 1, "noise_sigma": 0.0, "seed": 0}}
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({**base, **raw})


def test_source_must_be_exactly_one():
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"manifest": "x.json", "synth": {}})


def test_single_view_forces_contrastive_off():
    cfg = fast_config(views=["texture"], contrastive=True)
    assert cfg.contrastive is False


def test_ablation_case_mapping():
    cfg = fast_config()
    assert sorted(ABLATION_CASES) == [1, 2, 3, 4, 5]
    c1, c2, c3, c4, c5 = (ablation_config(cfg, c) for c in range(1, 6))
    assert (c1.views, c1.contrastive) == (["texture"], False)
    assert (c2.views, c2.contrastive) == (["spectral_spatial"], False)
    assert (c3.contrastive, c3.fusion, len(c3.views)) == (False, "mean", 2)
    assert (c4.contrastive, c4.fusion) == (True, "mean")
    assert (c5.contrastive, c5.fusion) == (True, "attention")
    with pytest.raises(ConfigError):
        ablation_config(cfg, 6)


def test_case3_equals_plain_mean_fusion_run():
    cfg = fast_config()
    a = execute(ablation_config(cfg, 3))
    b = execute(cfg.replace(fusion="mean", contrastive=False))
    np.testing.assert_array_equal(a.cluster.labels, b.cluster.labels)
    assert a.report == b.report


def test_outputs_and_determinism(tmp_path):
    cfg = fast_config(seed=7, dump_affinity=True, dump_graphs=True)
    run_pipeline(cfg.replace(output_dir=str(tmp_path / "a")))
    run_pipeline(cfg.replace(output_dir=str(tmp_path / "b")))
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == ["affinity.f64", "affinity.json", "cluster_map.ppm", "graph_spectral_spatial.txt",
                     "graph_texture.txt", "labels.u16", "loss.csv", "metrics.json",
                     "run_manifest.json"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    metrics = json.loads((tmp_path / "a" / "metrics.json").read_text())
    assert sorted(metrics) == ["acc", "kappa", "nmi"]
    loss = (tmp_path / "a" / "loss.csv").read_text().splitlines()
    assert loss[0] == "epoch,loss" and len(loss) == 1 + FAST["epochs"] + 1
    shape = json.loads((tmp_path / "a" / "affinity.json").read_text())["shape"]
    assert np.fromfile(tmp_path / "a" / "affinity.f64", dtype="<f8").size == shape[0] * shape[1]


def test_manifest_reproduces_run(tmp_path):
    cfg = fast_config(seed=3)
    run_pipeline(cfg.replace(output_dir=str(tmp_path / "first")))
    manifest = json.loads((tmp_path / "first" / "run_manifest.json").read_text())
    again = PipelineConfig.from_dict(manifest).replace(output_dir=str(tmp_path / "second"))
    run_pipeline(again)
    assert ((tmp_path / "first" / "metrics.json").read_bytes()
            == (tmp_path / "second" / "metrics.json").read_bytes())


def test_manifest_source_and_crop(tmp_path):
    _, cube = synth_multiview(3, 16, 6, 2, 0.01, seed=0)
    save_cube(cube, tmp_path / "scene.json")
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"manifest": "scene.json", "crop": [0, 4, 0, 8], "w": 3,
                                    "k": 4, "lambda": 1.0, **FAST}))
    cfg = PipelineConfig.from_json(cfg_path)
    assert os.path.isabs(cfg.manifest)
    run = execute(cfg)
    assert run.shape == (4, 8)
    assert run.truth.size == 32 and set(run.truth.tolist()) == {1, 2}


def test_sweep_rows():
    cfg = fast_config(epochs=0, attention_steps=0)
    csv = run_sweep(cfg, "lambda", [0.01, 0.1, 1, 10, 100, 1000])
    lines = csv.splitlines()
    assert lines[0] == "value,acc,nmi,kappa" and len(lines) == 7
    assert [float(l.split(",")[0]) for l in lines[1:]] == [0.01, 0.1, 1, 10, 100, 1000]
    k_lines = run_sweep(cfg, "k", [20, 25, 30, 35, 40]).splitlines()
    assert len(k_lines) == 6


def test_sweep_marks_failed_rows_and_rejects_bad_requests():
    cfg = fast_config(epochs=0, attention_steps=0)
    lines = run_sweep(cfg, "w", [3, 4]).splitlines()
    assert lines[2] == "4,failed,failed,failed"
    assert "failed" not in lines[1]
    with pytest.raises(ConfigError):
        run_sweep(cfg, "lambda", [])
    with pytest.raises(ConfigError):
        run_sweep(cfg, "tau", [1.0])


def test_errors_carry_stage_tag():
    cfg = fast_config(k=500)
    with pytest.raises(Exception) as info:
        execute(cfg)
    assert info.value.stage == "graph"
    assert str(info.value).startswith("[graph]")


def test_run_ablation_returns_report():
    report = run_ablation(fast_config(), 1)
    assert 0 <= report.acc <= 1


# --- command line -------------------------------------------------------------------

def _write_config(tmp_path, **extra):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(fast_config(**extra).to_dict()))
    return path


def test_cli_pipeline_and_ablation(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    assert cli.main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads((tmp_path / "out" / "metrics.json").read_text())
    # the written raster scores the same as the run itself
    truth = tmp_path / "truth.u16"
    run = execute(fast_config())
    raster = np.zeros(run.shape, dtype="<u2")
    raster[tuple(np.asarray(run.positions).T)] = run.truth
    raster.tofile(truth)
    assert cli.main(["eval", "--truth", str(truth), "--pred", str(tmp_path / "out" / "labels.u16")]) == 0
    assert json.loads(capsys.readouterr().out) == printed
    assert cli.main(["ablation", "--config", str(cfg), "--case", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["case"] == 2
    assert cli.main(["ablation", "--config", str(cfg), "--case", "6"]) == 2


def test_cli_sweep(tmp_path, capsys):
    cfg = _write_config(tmp_path, epochs=0, attention_steps=0)
    assert cli.main(["sweep", "--config", str(cfg), "--param", "k", "--values", "3,5",
                     "--out", str(tmp_path / "s.csv")]) == 0
    out = capsys.readouterr().out
    assert out == (tmp_path / "s.csv").read_text() and len(out.splitlines()) == 3
    assert cli.main(["sweep", "--config", str(cfg), "--param", "k", "--values", "a"]) == 2
    assert cli.main(["sweep", "--config", str(cfg), "--param", "k", "--values", ""]) == 2


def test_cli_synth_then_eval(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_clusters": 2, "nodes_per_cluster": 9, "ambient_dim": 5,
                                "subspace_dim": 2, "noise_sigma": 0.0, "seed": 1}))
    assert cli.main(["synth", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 0
    capsys.readouterr()
    labels = tmp_path / "d" / "cube_labels.u16"
    assert cli.main(["eval", "--truth", str(labels), "--pred", str(labels)]) == 0
    assert json.loads(capsys.readouterr().out) == {"acc": 1.0, "nmi": 1.0, "kappa": 1.0}
    swapped = np.fromfile(labels, dtype="<u2")
    swapped = np.where(swapped == 1, 2, np.where(swapped == 2, 1, 0)).astype("<u2")
    swapped.tofile(tmp_path / "pred.u16")
    assert cli.main(["eval", "--truth", str(labels), "--pred", str(tmp_path / "pred.u16")]) == 0
    assert json.loads(capsys.readouterr().out)["acc"] == 1.0


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["pipeline", "--config", str(bad), "--out", str(tmp_path)]) == 2
    cfg = tmp_path / "missing.json"
    cfg.write_text(json.dumps({"manifest": "nowhere.json"}))
    assert cli.main(["pipeline", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_clusters": 2}))
    assert cli.main(["synth", "--spec", str(spec), "--out", str(tmp_path)]) == 2
    (tmp_path / "a.u16").write_bytes(b"\x01\x00")
    (tmp_path / "b.u16").write_bytes(b"\x01\x00\x01\x00")
    assert cli.main(["eval", "--truth", str(tmp_path / "a.u16"),
                     "--pred", str(tmp_path / "b.u16")]) == 3


def test_cli_divergence_exit_code(tmp_path, monkeypatch):
    from cmscgc.errors import DivergenceError

    def boom(cfg):
        raise DivergenceError("non-finite contrastive loss at epoch 3", 3)

    monkeypatch.setattr(cli, "run_pipeline", boom)
    cfg = _write_config(tmp_path)
    assert cli.main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4


def test_encoder_head_defaults():
    base = {"synth": {"n_clusters": 2, "nodes_per_cluster": 4, "ambient_dim": 4,
                      "subspace_dim": 1, "noise_sigma": 0.0, "seed": 0}}
    assert PipelineConfig.from_dict(base).output_activation == "linear"
    assert synth_config().output_activation == "relu"
