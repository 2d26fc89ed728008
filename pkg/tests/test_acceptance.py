"""End-to-end acceptance criteria 1-8, one PASS/FAIL line printed per criterion.

Criterion 7 runs the full default synthetic benchmark (about half an hour on
one core).  Deselect it with ``-m "not slow"`` for a quick pass.
"""

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from burstcat import pipeline
from burstcat.assembler import BurstFeatures, ModelVariant, build_stack, channel_count, lstm_stack
from burstcat.augmentation import AugmentConfig, augment_stack
from burstcat.background import MixtureGrid, Mog2Params, burst_foreground, mog2_update
from burstcat.config import ExperimentConfig
from burstcat.dataset import BurstRecord, SplitSpec, balance, class_counts, split
from burstcat.learner import training
from burstcat.learner.models import CnnModel, LstmModel
from burstcat.learner.training import EarlyStopping, TrainConfig, checkpoint_batches, make_model, train
from burstcat.metrics import roc_auc
from burstcat.optical_flow import estimate_flow, poly_expand

from .conftest import tiny_config
from .helpers import finite_difference_grads, moving_square_burst, relative_error, shifted_pair, smooth_texture
from .test_background import grid_components, scalar_mog2_step
from .test_metrics import brute_force_auc
from .test_optical_flow import dense_wls_fit

BENCHMARK_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "benchmark.json"


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}")


def test_criterion_1_optical_flow_accuracy(capsys):
    rng = np.random.default_rng(2024)
    shifts = []
    while len(shifts) < 20:
        dx, dy = (int(v) for v in rng.integers(-4, 5, size=2))
        if 0 < math.hypot(dx, dy) <= 4:
            shifts.append((dx, dy))
    epes, med_errs, times = [], [], []
    for seed, (dx, dy) in enumerate(shifts):
        a, b = shifted_pair(128, dx, dy, seed=seed)
        t0 = time.perf_counter()
        flow = estimate_flow(a, b)
        times.append(time.perf_counter() - t0)
        epes.append(np.hypot(flow[..., 0] - dx, flow[..., 1] - dy).mean())
        med_errs.append(math.hypot(np.median(flow[..., 0]) - dx, np.median(flow[..., 1]) - dy))
    ok = max(epes) <= 0.5 and max(med_errs) <= 0.3 and max(times) <= 2.0
    report(capsys, 1, ok, f"worst mean EPE {max(epes):.3f} px (<= 0.5), worst median error {max(med_errs):.3f} px "
                          f"(<= 0.3), slowest pair {max(times):.2f} s (<= 2)")
    assert ok


def test_criterion_2_polynomial_expansion_matches_wls(capsys):
    worst = 0.0
    for seed in range(5):
        img = smooth_texture((24, 20), seed, sigma=1.5)
        for poly_n, sigma in ((5, 1.1), (5, 1.2), (7, 1.5)):
            pe = poly_expand(img, poly_n, sigma)
            for row in range(img.shape[0]):
                for col in range(img.shape[1]):
                    worst = max(worst, np.max(np.abs(pe.coeffs[row, col] - dense_wls_fit(img, row, col, poly_n,
                                                                                           sigma))))
    ok = worst <= 1e-6
    report(capsys, 2, ok, f"max |coefficient - WLS oracle| = {worst:.2e} over every pixel (<= 1e-6)")
    assert ok


def test_criterion_3_mog2(capsys):
    rng = np.random.default_rng(77)
    static = []
    for seed in range(20):
        base = np.stack([smooth_texture((48, 48), seed * 3 + k) for k in range(3)], axis=-1)
        frames = tuple(np.clip(base + 0.01 * rng.standard_normal(base.shape), 0, 1) for _ in range(3))
        static.append(burst_foreground(frames).mean())
    ious = []
    for seed in range(20):
        frames, truth = moving_square_burst(seed)
        mask = burst_foreground(frames) > 0
        ious.append((mask & truth).sum() / (mask | truth).sum())
    mismatches = 0
    p = Mog2Params()
    for trial in range(200):
        start = rng.random()
        model = MixtureGrid.from_frame(np.full((1, 1), start), p)
        comps = [[1.0, start, p.var_init]]
        for _ in range(int(rng.integers(3, 25))):
            x = float(np.clip(comps[0][1] + rng.normal(0, 0.05), 0, 1)) if rng.random() < 0.5 else rng.random()
            comps, ref_fg = scalar_mog2_step(comps, x, p)
            model, fg = mog2_update(model, np.full((1, 1), x))
            mismatches += (bool(fg[0, 0]) != ref_fg) or grid_components(model, 0, 0) != comps
    good = sum(i >= 0.5 for i in ious)
    ok = max(static) < 0.01 and good >= 18 and mismatches == 0
    report(capsys, 3, ok, f"static foreground max {100 * max(static):.2f}% (< 1%), IoU >= 0.5 on {good}/20 "
                          f"(>= 18), scalar-oracle trajectory mismatches {mismatches} (0)")
    assert ok


def test_criterion_4_gradient_checks(capsys):
    t0 = time.perf_counter()
    errors = []
    for i, k in enumerate([3, 4, 6, 7, 10, 13, 15, 3, 4, 6, 7, 10, 13, 15]):
        rng = np.random.default_rng(500 + i)
        model = CnnModel(k, rng, np.float64)
        model.params["conv1_b"][:] = rng.normal(0, 0.05, model.params["conv1_b"].shape)
        x = rng.random((2, 8, 8, k))
        y = np.array([1, 0]) if i % 2 else np.array([0, 1])
        errors.append(_grad_error(model, x, y))
    for i in range(6):
        rng = np.random.default_rng(900 + i)
        model = LstmModel(rng, np.float64)
        model.params["lstm_b"][:] = rng.normal(0, 0.1, model.params["lstm_b"].shape)
        errors.append(_grad_error(model, rng.random((2, 8, 8, 9)), np.array([i % 2, 1 - i % 2])))
    elapsed = time.perf_counter() - t0
    ok = len(errors) >= 20 and max(errors) <= 1e-4 and elapsed <= 300
    report(capsys, 4, ok, f"{len(errors)} instances (14 CNN, 6 LSTM), float64, h=1e-5, worst relative error "
                          f"{max(errors):.2e} (<= 1e-4), {elapsed:.0f} s (<= 300)")
    assert ok


def _grad_error(model, x, y):
    _, grads = model.loss_and_grads(x, y)
    fd = finite_difference_grads(model, x, y, h=1e-5)
    return max(relative_error(grads[n], fd[n]) for n in model.params)


def test_criterion_5_auc(capsys):
    rng = np.random.default_rng(55)
    exact = 0
    for _ in range(100):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))
        exact += roc_auc(scores, labels) == brute_force_auc(scores.tolist(), labels.tolist())
    worked = [roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0,
              roc_auc([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 0.5,
              roc_auc([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]) == 0.75]
    ok = exact == 100 and all(worked)
    report(capsys, 5, ok, f"rank-sum == brute force bit-exactly on {exact}/100, worked examples {sum(worked)}/3")
    assert ok


def test_criterion_6_protocol_fidelity(capsys, tiny_run, monkeypatch):
    checks = {}
    expected = {"Baseline": 3, "LSTM": 9, "Mog2_4": 4, "Mog2_10": 10, "OptFlow_6": 6, "OptFlow_15": 15,
                "Hybrid_13": 13, "OptFlowOnly_6": 6, "OptFlowMog2Only_7": 7}
    rng = np.random.default_rng(6)
    frames = [rng.random((16, 16, 3)).astype(np.float32) for _ in range(3)]
    feats = BurstFeatures(*(rng.random((16, 16, 3)).astype(np.float32) for _ in range(3)),
                          (rng.random((16, 16)) > 0.5).astype(np.float32))
    counts_ok = True
    for name, n in expected.items():
        out = build_stack(frames, feats, ModelVariant(name))
        out = lstm_stack(out) if isinstance(out, list) else out
        counts_ok &= channel_count(ModelVariant(name)) == n == out.channels
    checks["channel counts"] = counts_ok

    recs = [BurstRecord(f"b{i}", f"s{i % 12}", "x", ("a", "b", "c"), int(rng.random() < 0.3)) for i in range(400)]
    balanced_ok, disjoint_ok = True, True
    for mode in ("uniform", "site_based"):
        out = balance(split(recs, SplitSpec(mode, (0.6, 0.2, 0.2), 1)), 1)
        balanced_ok &= all(a == b for a, b in class_counts(out).values())
        if mode == "site_based":
            sites = [{r.site_id for r in out if r.split == s} for s in ("train", "val", "test")]
            disjoint_ok = not (sites[0] & sites[1] or sites[0] & sites[2] or sites[1] & sites[2])
    checks["balanced classes"] = balanced_ok
    checks["disjoint sites"] = disjoint_ok

    stack = build_stack(frames, feats, ModelVariant.Hybrid_13)
    jitter_ok = True
    for k in range(200):
        a = augment_stack(stack, AugmentConfig(seed=k), (0, k))
        b = augment_stack(stack, AugmentConfig(seed=k, color_prob=0.0), (0, k))
        jitter_ok &= np.array_equal(a.data[..., 9:], b.data[..., 9:])
    checks["flow/MOG2 untouched by colour jitter"] = jitter_ok

    stopper = EarlyStopping(3)
    stop_at = next(i for i, auc in enumerate([0.60, 0.70, 0.69, 0.68, 0.66], 1)
                   if (stopper.update(auc), stopper.should_stop)[1])
    splits = pipeline.load_split(tiny_run, "uniform")
    script = iter([0.60, 0.70, 0.69, 0.68, 0.66])
    monkeypatch.setattr(training, "roc_auc", lambda p, y: next(script))
    seen = []
    n_train = 128
    train_recs = (splits["train"] * (n_train // len(splits["train"]) + 1))[:n_train]
    best = train(make_model(ModelVariant.Hybrid_13, np.random.default_rng(0)), train_recs, splits["val"],
                 ModelVariant.Hybrid_13, TrainConfig(batch_size=32, epochs=3), None,
                 pipeline.CachedStore(tiny_run.image_size, pipeline.feature_dir(tiny_run)),
                 on_checkpoint=lambda k, auc, imp: seen.append(k))
    checks["quarter-epoch checkpoints + patience 3"] = (
        checkpoint_batches(4) == [1, 2, 3, 4] and stop_at == 5 and stopper.best_index == 2
        and seen == [1, 2, 3, 4, 5] and best.checkpoint_index == 2 and best.step == 2)
    ok = all(checks.values())
    report(capsys, 6, ok, ", ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok


@pytest.mark.slow
def test_criterion_7_default_benchmark(capsys, tmp_path):
    cfg = ExperimentConfig.load(BENCHMARK_CONFIG).with_overrides([f"out={tmp_path / 'benchmark'}"])
    t0 = time.perf_counter()
    _, results = pipeline.cmd_experiment(cfg, jobs=os.cpu_count() or 1)
    minutes = (time.perf_counter() - t0) / 60
    mean = results["mean"]
    with capsys.disabled():
        print()
        print((Path(cfg.out) / "comparison.txt").read_text())
        split_info = json.loads((pipeline.split_dir(cfg, "uniform") / "split.json").read_text())
        print("uniform split counts (empty, animal):", split_info["counts"])
    d_uni = mean["Hybrid_13"]["uniform"] - mean["Baseline"]["uniform"]
    d_site = mean["Hybrid_13"]["site_based"] - mean["Baseline"]["site_based"]
    d_flow = mean["OptFlowMog2Only_7"]["site_based"] - mean["Baseline"]["site_based"]
    ok = d_uni >= 0.05 and d_site >= 0.05 and d_flow > 0 and minutes <= 45
    report(capsys, 7, ok, f"Hybrid_13 - Baseline: uniform {d_uni:+.3f}, site_based {d_site:+.3f} (>= 0.05); "
                          f"OptFlowMog2Only_7 - Baseline site_based {d_flow:+.3f} (> 0); "
                          f"{minutes:.1f} min on {os.cpu_count()} core(s) (<= 45)")
    assert ok


def test_criterion_8_determinism(capsys, tmp_path):
    texts, cfgs = [], []
    for name in ("a", "b"):
        cfg = tiny_config(tmp_path / name, variants=["Baseline", "Hybrid_13", "OptFlowMog2Only_7", "LSTM"],
                          n_seeds=2)
        text, _ = pipeline.cmd_experiment(cfg)
        texts.append(text)
        cfgs.append(cfg)
    root_a, root_b = Path(cfgs[0].out), Path(cfgs[1].out)
    files = [p.relative_to(root_a) for p in root_a.rglob("*")
             if p.is_file() and p.name != "config.json" and "synth" not in p.parts]
    differing = [str(f) for f in files if (root_a / f).read_bytes() != (root_b / f).read_bytes()]
    n_ckpt = sum(f.suffix == ".btsc" for f in files)
    n_reports = sum(f.name.startswith("report") for f in files)
    ok = not differing and texts[0] == texts[1] and n_ckpt == 16 and n_reports == 32
    report(capsys, 8, ok, f"{n_ckpt} checkpoints, {n_reports} report files, {len(files)} artifacts compared; "
                          f"{len(differing)} differ")
    assert ok, differing[:10]
