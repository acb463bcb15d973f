import re

import numpy as np
import pytest

from signsym.errors import ConfigError
from signsym.harness import (CSV_COLUMNS, ExperimentConfig, RunRecord, emit_csv, emit_svg_plot,
                             read_csv, run_pipeline)


def small_cfg(**kw):
    base = dict(dataset="synthetic-blobs", model="mlp:32", pretrain_epochs=3, finetune_epochs=2,
                lr_head=1e-3, n_train=400, n_eval=100, n_eval_blackbox=3, query_budget=80,
                finetune_rules=["BP", "uSF"], attacks=["FGSM", "PGD", "HSJA"],
                epsilons=[0.0, 0.05, 0.2])
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = small_cfg()
    return cfg, out, run_pipeline(cfg, out)


def test_record_count_and_files(run):
    cfg, out, records = run
    assert len(records) == len(cfg.attacks) * len(cfg.epsilons) * len(cfg.finetune_rules)
    assert (out / "results.csv").exists() and (out / "results.svg").exists()
    assert len(list((out / "checkpoints").glob("*.ckpt"))) == 3


def test_epsilon_zero_equals_clean(run):
    for r in run[2]:
        if r.epsilon == 0:
            assert r.robust == r.clean


def test_robust_metric_non_increasing(run):
    for rule in ("BP", "uSF"):
        for attack in ("FGSM", "PGD", "HSJA"):
            rows = [r.robust for r in run[2] if r.rule == rule and r.attack == attack]
            assert all(b <= a + 0.02 for a, b in zip(rows, rows[1:]))


def test_csv_roundtrip_and_header(run, tmp_path):
    _, out, records = run
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert read_csv(out / "results.csv") == records
    emit_csv(records[:1], tmp_path / "one.csv")
    assert len((tmp_path / "one.csv").read_text().splitlines()) == 2


def test_resume_reproduces_records(run):
    cfg, out, records = run
    again = run_pipeline(cfg, out)
    strip = [(r.rule, r.attack, r.epsilon, r.clean, r.robust) for r in records]
    assert strip == [(r.rule, r.attack, r.epsilon, r.clean, r.robust) for r in again]


def test_svg_monotone_polyline(tmp_path):
    records = [RunRecord("h", "BP", "PGD", e, 0.9, rob, 10, 0.0, 0)
               for e, rob in [(0.0, 0.9), (0.01, 0.7), (0.1, 0.4), (0.5, 0.1)]]
    emit_svg_plot(records, tmp_path / "p.svg")
    svg = (tmp_path / "p.svg").read_text()
    pts = re.search(r'data-rule="BP"[^>]*points="([^"]+)"', svg).group(1).split()
    xs = [float(p.split(",")[0]) for p in pts]
    ys = [float(p.split(",")[1]) for p in pts]
    assert xs == sorted(xs)
    # SVG y grows downward: falling robustness means rising y
    assert ys == sorted(ys)


def test_record_metric_range():
    with pytest.raises(ValueError):
        RunRecord("h", "BP", "PGD", 0.1, 0.5, 1.2, 10, 0.0, 0)


@pytest.mark.parametrize("kw", [
    dict(epsilons=[0.1, 0.05]),
    dict(epsilons=[0.01, 0.1]),
    dict(task="hashing", attacks=["PGD"]),
    dict(attacks=["HAG"]),
    dict(attacks=["SDHA"]),
    dict(finetune_rules=["TP"]),
    dict(model="resnet18"),
    dict(task="ranking"),
])
def test_invalid_configs_rejected(kw):
    with pytest.raises(ConfigError):
        small_cfg(**kw)


def test_config_text_parsing():
    cfg = ExperimentConfig.from_text("""
        # desk run
        dataset = synthetic-blobs
        model = mlp:16,16
        finetune-rules = BP, brSF
        epsilons = 0, 0.1
        seed = 3   # trailing comment
    """, seed=5)
    assert cfg.finetune_rules == ["BP", "brSF"] and cfg.epsilons == [0.0, 0.1]
    assert cfg.model == "mlp:16,16" and cfg.seed == 5
    with pytest.raises(ConfigError, match="line 1"):
        ExperimentConfig.from_text("bogus = 1")
    with pytest.raises(ConfigError, match="line 1"):
        ExperimentConfig.from_text("seed = many")


def test_config_hash_tracks_content():
    a, b = small_cfg(), small_cfg()
    assert a.config_hash == b.config_hash and len(a.config_hash) == 12
    assert small_cfg(seed=1).config_hash != a.config_hash


def test_hashing_pipeline_records():
    cfg = small_cfg(task="hashing", attacks=["HAG"], epsilons=[0.001, 0.1], code_bits=16,
                    map_k=100)
    records = run_pipeline(cfg)
    assert len(records) == 4
    assert all(r.attack == "HAG" and 0 <= r.robust <= 1 for r in records)
