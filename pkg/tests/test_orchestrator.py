"""The suggest/annotate/train loop, checkpoint/resume, and experiment drivers."""

import json
import zipfile
from dataclasses import replace

import numpy as np
import pytest

from gradseg import orchestrator
from gradseg.metrics import dice_score
from gradseg.orchestrator import (
    BudgetError,
    LoopCheckpointError,
    LoopConfig,
    MissingMask,
    OracleAnnotator,
    PoolState,
    ablate,
    compare_strategies,
    evaluate,
    resume_loop,
    run_loop,
)
from tests.conftest import tiny_config


def test_config_validation():
    with pytest.raises(ValueError):
        LoopConfig(m=0).validate()
    with pytest.raises(ValueError):
        LoopConfig(n_iterations=-1).validate()
    with pytest.raises(ValueError):
        LoopConfig(strategy="psychic").validate()
    with pytest.raises(BudgetError, match="budget"):
        LoopConfig(m=10, n_iterations=9).validate(n_train=99)
    assert LoopConfig(m=10, n_iterations=4).budget == 50


def test_pool_state_no_double_annotation():
    pool = PoolState(unlabeled_ids=[1, 2, 3])
    pool.add_labeled(2, np.zeros((2, 2), np.uint8))
    assert pool.labeled_ids == [2] and pool.unlabeled_ids == [1, 3]
    with pytest.raises(ValueError, match="twice"):
        pool.add_labeled(2, np.zeros((2, 2), np.uint8))
    with pytest.raises(ValueError, match="not unlabeled"):
        pool.add_labeled(9, np.zeros((2, 2), np.uint8))


def test_oracle_annotator(tiny_dataset):
    ann = OracleAnnotator(tiny_dataset)
    s = tiny_dataset.samples[0]
    assert np.array_equal(ann.annotate(s.id), s.mask)
    assert np.array_equal(ann.annotate(s.id), s.mask)  # identical across calls
    with pytest.raises(MissingMask):
        OracleAnnotator(tiny_dataset.without_masks()).annotate(s.id)


def test_budget_arithmetic_m10_n4(tiny_dataset, tiny_vae):
    cfg = tiny_config(m=10, n_iterations=4, epochs_per_iter=1, strategy="random")
    report = run_loop(cfg, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset))
    assert report.rows[-1]["labeled_count"] == 50
    assert len(report.rows) == 5


def test_n_zero_single_row(tiny_dataset, tiny_vae):
    cfg = tiny_config(n_iterations=0, epochs_per_iter=1)
    report = run_loop(cfg, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset))
    assert len(report.rows) == 1
    assert report.rows[0]["labeled_count"] == cfg.m


def test_budget_violation_aborts(tiny_dataset, tiny_vae):
    cfg = tiny_config(m=30, n_iterations=3)
    with pytest.raises(BudgetError):
        run_loop(cfg, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset))


def test_z_dim_mismatch_rejected(tiny_dataset, tiny_vae):
    cfg = tiny_config(z_dim=5)
    with pytest.raises(ValueError, match="z_dim"):
        run_loop(cfg, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset))


def test_bitwise_determinism(tiny_dataset, tiny_vae, tmp_path):
    cfg = tiny_config(strategy="gradient")
    blobs = []
    for name in ("a", "b"):
        report = run_loop(
            cfg, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset),
            checkpoint_path=tmp_path / name,
        )
        blobs.append((report.canonical_json(), (tmp_path / name).read_bytes()))
    assert blobs[0][0] == blobs[1][0]
    assert blobs[0][1] == blobs[1][1]


def test_suggestion_log_never_touches_test_split(tiny_dataset, tiny_vae, tiny_spec):
    cfg = tiny_config(n_iterations=2, strategy="gradient")
    report = run_loop(cfg, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset))
    train_ids = {s.id for s in tiny_dataset.split("train")}
    for entry in report.suggestion_log:
        assert entry["suggested_id"] in train_ids


class _Flaky:
    """Oracle annotator that dies at a chosen iteration."""

    def __init__(self, dataset, fail_at):
        self.inner = OracleAnnotator(dataset)
        self.fail_at = fail_at

    def annotate_batch(self, ids, iteration, suggestions=None):
        if iteration >= self.fail_at:
            raise RuntimeError("annotator offline")
        return self.inner.annotate_batch(ids, iteration, suggestions)


@pytest.mark.parametrize("strategy", ["gradient", "random", "oracle"])
def test_resume_matches_uninterrupted(tiny_dataset, tiny_vae, tmp_path, strategy):
    cfg = tiny_config(n_iterations=2, strategy=strategy)
    full = run_loop(cfg, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset))
    ckpt = tmp_path / "loop.ckpt"
    with pytest.raises(RuntimeError, match="offline"):
        run_loop(cfg, tiny_dataset, tiny_vae, _Flaky(tiny_dataset, 2), ckpt)
    resumed = resume_loop(ckpt, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset))
    assert resumed.canonical_json() == full.canonical_json()


def test_resume_from_corrupt_checkpoint(tmp_path, tiny_dataset, tiny_vae):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a zip at all")
    with pytest.raises(LoopCheckpointError, match="corrupt"):
        resume_loop(path, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset))


def test_resume_rejects_version_mismatch(tmp_path, tiny_dataset, tiny_vae):
    path = tmp_path / "old.ckpt"
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr("state.json", json.dumps({"magic": "GSLC0"}))
    with pytest.raises(LoopCheckpointError, match="version"):
        resume_loop(path, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset))


def test_checkpoint_roundtrips_pool_partition(tiny_dataset, tiny_vae, tmp_path):
    cfg = tiny_config(n_iterations=1)
    ckpt = tmp_path / "loop.ckpt"
    run_loop(cfg, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset), ckpt)
    with zipfile.ZipFile(ckpt) as zf:
        meta = json.loads(zf.read("state.json"))
    labeled = set(meta["pool"]["labeled_ids"])
    unlabeled = set(meta["pool"]["unlabeled_ids"])
    train_ids = {s.id for s in tiny_dataset.split("train")}
    assert labeled & unlabeled == set()
    assert labeled | unlabeled == train_ids
    assert len(labeled) == cfg.budget


def test_report_files(tiny_dataset, tiny_vae, tmp_path):
    cfg = tiny_config(n_iterations=1, epochs_per_iter=1)
    report = run_loop(cfg, tiny_dataset, tiny_vae, OracleAnnotator(tiny_dataset))
    report.save(tmp_path / "report.json", tmp_path / "timing.json")
    body = json.loads((tmp_path / "report.json").read_text())
    assert "wall_clock" not in body  # timing kept out of the deterministic body
    assert len(body["rows"]) == 2
    timing = json.loads((tmp_path / "timing.json").read_text())
    assert timing["wall_clock_seconds"] > 0
    csv = report.metrics_csv()
    header = csv.splitlines()[0].split(",")
    assert header[:4] == ["iteration", "labeled_count", "mean_dice", "std_dice"]
    assert len(csv.splitlines()) == 3


def test_evaluate_fields(tiny_dataset, tiny_vae):
    from gradseg.segmenter import UNet

    net = UNet(height=16, width=16, filters=(4, 8), bottleneck=16)
    row = evaluate(net, tiny_dataset.split("test"))
    assert 0.0 <= row["mean_dice"] <= 1.0
    assert len(row["per_class_dice"]) == 3
    assert row["hausdorff_undefined"] >= 0


# -- experiment drivers -----------------------------------------------------------


def test_compare_identical_strategies(tiny_dataset, tiny_vae):
    cfg = tiny_config(epochs_per_iter=1)
    result = compare_strategies(cfg, ["random", "random"], 5, tiny_dataset, tiny_vae)
    blocks = result["blocks"]
    assert len(blocks) == 2
    assert blocks[0]["final_dice_per_rep"] == blocks[1]["final_dice_per_rep"]
    assert result["wilcoxon_top_two"]["result"] == "identical"


def test_compare_validation(tiny_dataset, tiny_vae):
    cfg = tiny_config()
    with pytest.raises(ValueError, match="strategies"):
        compare_strategies(cfg, ["random"], 5, tiny_dataset, tiny_vae)
    with pytest.raises(ValueError, match="repetitions"):
        compare_strategies(cfg, ["random", "oracle"], 4, tiny_dataset, tiny_vae)


def test_ablate_blocks_and_angular_off(tiny_dataset, tiny_vae):
    cfg = tiny_config(epochs_per_iter=1)
    grid = [(2, True), (2, False)]
    result = ablate(cfg, grid, 2, tiny_dataset, {2: tiny_vae})
    assert len(result["blocks"]) == 2
    on, off = result["blocks"]
    assert on["angular"] and on["cos_threshold"] == cfg.cos_threshold
    assert not off["angular"] and off["cos_threshold"] == -1.0
    assert len(off["final_dice_per_rep"]) == 2


def test_evaluate_consistent_with_dice_score(tiny_dataset, tiny_vae):
    from gradseg.segmenter import UNet, argmax_mask, predict_probabilities

    net = UNet(height=16, width=16, filters=(4, 8), bottleneck=16, seed=3)
    test = tiny_dataset.split("test")
    row = evaluate(net, test)
    manual = []
    for s in test:
        p = predict_probabilities(net, s.pixels[None])[0]
        pred = argmax_mask(p)
        manual.append(np.mean([dice_score(pred, s.mask, k) for k in range(3)]))
    assert row["mean_dice"] == pytest.approx(float(np.mean(manual)))
