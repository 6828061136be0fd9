"""The iterative suggest/annotate/train loop, plus experiment drivers.

Iteration 0 annotates m uniformly random samples and trains the segmenter;
each subsequent iteration asks the configured strategy for m more ids,
obtains annotations from the pluggable annotator, extends the labeled set,
fine-tunes, and evaluates on the held-out test split. With the oracle
annotator the whole pipeline is a deterministic function of the config
seeds; checkpoints taken at iteration boundaries allow lossless resume.
"""

import json
import time
import zipfile
from dataclasses import dataclass, asdict, field, replace

import numpy as np

from .datagen import ImageSample
from .manifold import encode_pool
from .metrics import DegeneratePairs, dice_score, hausdorff, wilcoxon_signed_rank
from .rng import RngStream
from .sampler import (
    GradientGuidedSampler,
    SamplerConfig,
    oracle_strategy,
    random_strategy,
)
from .segmenter import (
    SegTrainConfig,
    UNet,
    predict_probabilities,
    argmax_mask,
    train_segmenter,
)

LOOP_MAGIC_META = "GSLC1"
STRATEGIES = ("gradient", "random", "oracle")


class BudgetError(ValueError):
    pass


class MissingMask(KeyError):
    pass


class LoopCheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class LoopConfig:
    m: int = 12  # samples annotated per iteration
    n_iterations: int = 9  # suggestion iterations after the initial one
    epochs_per_iter: int = 10
    lr: float = 1e-3
    batch_size: int = 32
    alpha: float = 1e-3
    cos_threshold: float = 0.5
    epsilon_norm: float = 1e-9
    z_dim: int = 3
    strategy: str = "gradient"
    seed: int = 0
    use_augmentation: bool = True
    seg_filters: tuple = (8, 16, 32, 64)
    seg_bottleneck: int = 128

    def validate(self, n_train=None):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if n_train is not None and self.budget > n_train:
            raise BudgetError(
                f"budget (n+1)*m = {self.budget} exceeds pool of {n_train}"
            )

    @property
    def budget(self):
        return (self.n_iterations + 1) * self.m

    def sampler_config(self):
        return SamplerConfig(self.alpha, self.cos_threshold, self.epsilon_norm)


class OracleAnnotator:
    """Simulated expert: returns the construction-time ground-truth mask."""

    def __init__(self, dataset):
        self.dataset = dataset

    def annotate(self, sample_id):
        sample = self.dataset.by_id(sample_id)
        if sample.mask is None:
            raise MissingMask(f"sample {sample_id} has no ground-truth mask")
        return sample.mask.copy()

    def annotate_batch(self, ids, iteration, suggestions=None):
        return {i: self.annotate(i) for i in ids}


@dataclass
class PoolState:
    labeled_ids: list = field(default_factory=list)  # annotation order
    annotations: dict = field(default_factory=dict)  # id -> mask
    unlabeled_ids: list = field(default_factory=list)  # sorted
    last_suggested: list = field(default_factory=list)

    def add_labeled(self, sample_id, mask):
        if sample_id in self.annotations:
            raise ValueError(f"sample {sample_id} annotated twice")
        if sample_id not in self.unlabeled_ids:
            raise ValueError(f"sample {sample_id} is not unlabeled")
        self.labeled_ids.append(sample_id)
        self.annotations[sample_id] = mask
        self.unlabeled_ids.remove(sample_id)


@dataclass
class RunReport:
    config: dict
    rows: list = field(default_factory=list)
    loss_curve: list = field(default_factory=list)  # per-iteration epoch losses
    suggestion_log: list = field(default_factory=list)
    wall_clock: float = 0.0

    def canonical_json(self):
        """Deterministic report body; wall-clock is reported separately so
        byte-identical configs+seeds yield byte-identical reports."""
        body = {
            "config": self.config,
            "rows": self.rows,
            "loss_curve": self.loss_curve,
            "suggestion_log": self.suggestion_log,
        }
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    def save(self, report_path, timing_path=None):
        with open(report_path, "w") as f:
            f.write(self.canonical_json())
        if timing_path:
            with open(timing_path, "w") as f:
                json.dump({"wall_clock_seconds": self.wall_clock}, f)

    def metrics_csv(self):
        if not self.rows:
            return ""
        K = len(self.rows[0]["per_class_dice"])
        cols = (
            ["iteration", "labeled_count", "mean_dice", "std_dice"]
            + [f"dice_class_{k}" for k in range(K)]
            + ["hausdorff_mean", "hausdorff_undefined_count", "train_loss"]
        )
        lines = [",".join(cols)]
        for r in self.rows:
            vals = (
                [r["iteration"], r["labeled_count"], r["mean_dice"], r["std_dice"]]
                + list(r["per_class_dice"])
                + [r["hausdorff_mean"], r["hausdorff_undefined"], r["train_loss"]]
            )
            lines.append(",".join("" if v is None else repr(v) for v in vals))
        return "\n".join(lines) + "\n"

    @property
    def final_mean_dice(self):
        return self.rows[-1]["mean_dice"]


def evaluate(net, test_samples, batch_size=64):
    """Test-split metrics: Dice per class and Hausdorff aggregate."""
    K = net.n_classes
    per_sample_mean = []
    per_class = [[] for _ in range(K)]
    hd_vals = []
    hd_undef = 0
    for lo in range(0, len(test_samples), batch_size):
        chunk = test_samples[lo : lo + batch_size]
        probs = predict_probabilities(net, np.stack([s.pixels for s in chunk]))
        for s, p in zip(chunk, probs):
            pred = argmax_mask(p)
            scores = [dice_score(pred, s.mask, k) for k in range(K)]
            per_sample_mean.append(float(np.mean(scores)))
            for k in range(K):
                per_class[k].append(scores[k])
                h = hausdorff(pred, s.mask, k)
                if h is None:
                    hd_undef += 1
                else:
                    hd_vals.append(h)
    return {
        "mean_dice": float(np.mean(per_sample_mean)),
        "std_dice": float(np.std(per_sample_mean)),
        "per_class_dice": [float(np.mean(c)) for c in per_class],
        "hausdorff_mean": float(np.mean(hd_vals)) if hd_vals else None,
        "hausdorff_undefined": hd_undef,
    }


class _LoopState:
    """Everything run_loop carries between iterations."""

    def __init__(self, config, dataset, vae):
        self.config = config
        self.dataset = dataset
        self.vae = vae
        if vae.z_dim != config.z_dim:
            raise ValueError(
                f"config z_dim {config.z_dim} != VAE z_dim {vae.z_dim}"
            )
        self.train_samples = dataset.split("train")
        self.test_samples = dataset.split("test")
        self.pool = PoolState(unlabeled_ids=sorted(s.id for s in self.train_samples))
        self.net = UNet(
            height=dataset.spec.height,
            width=dataset.spec.width,
            n_classes=dataset.spec.n_classes,
            filters=config.seg_filters,
            bottleneck=config.seg_bottleneck,
            seed=config.seed,
        )
        self.rngs = {
            "init-select": RngStream(config.seed, "init-select"),
            "seg-shuffle": RngStream(config.seed, "seg-shuffle"),
            "augment": RngStream(config.seed, "augment"),
            "random-strategy": RngStream(config.seed, "random-strategy"),
        }
        self.report = RunReport(config=asdict(config))
        self.completed_iterations = -1  # index of last finished iteration
        self.latent = encode_pool(vae, self.train_samples)
        self.sampler = GradientGuidedSampler(vae, self.latent, config.sampler_config())

    def labeled_training_set(self):
        out = []
        for i in self.pool.labeled_ids:
            src = self.dataset.by_id(i)
            out.append(ImageSample(i, src.pixels, self.pool.annotations[i], "train"))
        return out

    def seed_samples(self):
        """The m labeled samples the current segmenter fits worst.

        Suggestion seeds chase the model's remaining weaknesses: each seed
        gets perturbed along its loss gradient, and the unlabeled sample
        nearest to the perturbed latent is suggested next. Ties break on id
        so the seed set is deterministic.
        """
        labeled = self.labeled_training_set()
        K = self.net.n_classes
        scored = []
        for lo in range(0, len(labeled), 64):
            chunk = labeled[lo : lo + 64]
            probs = predict_probabilities(
                self.net, np.stack([s.pixels for s in chunk])
            )
            for s, p in zip(chunk, probs):
                pred = argmax_mask(p)
                d = float(np.mean([dice_score(pred, s.mask, k) for k in range(K)]))
                scored.append((d, s.id, s))
        scored.sort(key=lambda t: (t[0], t[1]))
        return [s for _, _, s in scored[: self.config.m]]


def _run_iteration(state, iteration, annotator):
    cfg = state.config
    if iteration == 0:
        ids = random_strategy(state.pool.unlabeled_ids, cfg.m, state.rngs["init-select"])
        suggestions = [
            {"iteration": 0, "seed_id": None, "suggested_id": int(i),
             "distance": None, "cosine": None, "fallback": False}
            for i in ids
        ]
    elif cfg.strategy == "gradient":
        batch = state.sampler.suggest_batch(
            state.net, state.seed_samples(), state.pool.unlabeled_ids, cfg.m
        )
        ids = [s.suggested_id for s in batch]
        suggestions = [
            {"iteration": iteration, "seed_id": s.seed_id,
             "suggested_id": s.suggested_id, "distance": s.distance,
             "cosine": s.cosine, "fallback": s.fallback}
            for s in batch
        ]
    elif cfg.strategy == "random":
        ids = random_strategy(
            state.pool.unlabeled_ids, cfg.m, state.rngs["random-strategy"]
        )
        suggestions = [
            {"iteration": iteration, "seed_id": None, "suggested_id": int(i),
             "distance": None, "cosine": None, "fallback": False}
            for i in ids
        ]
    else:  # oracle
        unlabeled = [state.dataset.by_id(i) for i in state.pool.unlabeled_ids]
        ids = oracle_strategy(state.net, unlabeled, cfg.m)
        suggestions = [
            {"iteration": iteration, "seed_id": None, "suggested_id": int(i),
             "distance": None, "cosine": None, "fallback": False}
            for i in ids
        ]

    masks = annotator.annotate_batch(ids, iteration, suggestions)
    for i in ids:
        state.pool.add_labeled(i, masks[i])
    state.pool.last_suggested = list(ids)
    state.report.suggestion_log.extend(suggestions)

    losses = train_segmenter(
        state.net,
        state.labeled_training_set(),
        SegTrainConfig(
            epochs=cfg.epochs_per_iter,
            lr=cfg.lr,
            batch_size=cfg.batch_size,
            use_augmentation=cfg.use_augmentation,
        ),
        state.rngs["seg-shuffle"],
        state.rngs["augment"],
    )
    row = evaluate(state.net, state.test_samples)
    row["iteration"] = iteration
    row["labeled_count"] = len(state.pool.labeled_ids)
    row["train_loss"] = losses[-1] if losses else None
    state.report.rows.append(row)
    state.report.loss_curve.append(losses)
    state.completed_iterations = iteration


def run_loop(config, dataset, vae, annotator, checkpoint_path=None):
    """Run the full loop; returns a RunReport.

    With checkpoint_path set, the loop state is written after every
    iteration; an annotator failure leaves the last checkpoint resumable.
    """
    config.validate(n_train=len(dataset.split("train")))
    t0 = time.time()
    state = _LoopState(config, dataset, vae)
    for iteration in range(config.n_iterations + 1):
        _run_iteration(state, iteration, annotator)
        if checkpoint_path:
            save_loop_checkpoint(state, checkpoint_path)
    state.report.wall_clock = time.time() - t0
    return state.report


# -- loop checkpointing --------------------------------------------------------


def save_loop_checkpoint(state, path):
    meta = {
        "magic": LOOP_MAGIC_META,
        "config": asdict(state.config),
        "completed_iterations": state.completed_iterations,
        "pool": {
            "labeled_ids": [int(i) for i in state.pool.labeled_ids],
            "unlabeled_ids": [int(i) for i in state.pool.unlabeled_ids],
            "last_suggested": [int(i) for i in state.pool.last_suggested],
        },
        "rngs": {k: v.get_state() for k, v in state.rngs.items()},
        "report": {
            "rows": state.report.rows,
            "loss_curve": state.report.loss_curve,
            "suggestion_log": state.report.suggestion_log,
        },
        "mask_shape": [state.dataset.spec.height, state.dataset.spec.width],
    }
    stamp = (1980, 1, 1, 0, 0, 0)  # fixed timestamps keep bytes deterministic
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        zf.writestr(zipfile.ZipInfo("state.json", stamp),
                    json.dumps(meta, sort_keys=True, separators=(",", ":")))
        zf.writestr(zipfile.ZipInfo("seg.ckpt", stamp), state.net.to_bytes())
        for i in state.pool.labeled_ids:
            zf.writestr(
                zipfile.ZipInfo(f"ann/{int(i)}", stamp),
                np.ascontiguousarray(state.pool.annotations[i], np.uint8).tobytes(),
            )


def resume_loop(path, dataset, vae, annotator, checkpoint_path=None):
    """Continue an interrupted run from its checkpoint; returns a RunReport."""
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("state.json"))
            if meta.get("magic") != LOOP_MAGIC_META:
                raise LoopCheckpointError(f"version mismatch in {path}")
            seg_bytes = zf.read("seg.ckpt")
            H, W = meta["mask_shape"]
            annotations = {
                int(i): np.frombuffer(zf.read(f"ann/{int(i)}"), np.uint8)
                .reshape(H, W)
                .copy()
                for i in meta["pool"]["labeled_ids"]
            }
    except (zipfile.BadZipFile, KeyError, ValueError, json.JSONDecodeError) as e:
        raise LoopCheckpointError(f"corrupt loop checkpoint {path}: {e}") from e

    cfg_dict = dict(meta["config"])
    cfg_dict["seg_filters"] = tuple(cfg_dict["seg_filters"])
    config = LoopConfig(**cfg_dict)
    state = _LoopState(config, dataset, vae)
    state.net = UNet.from_bytes(seg_bytes)
    state.pool.labeled_ids = list(meta["pool"]["labeled_ids"])
    state.pool.unlabeled_ids = list(meta["pool"]["unlabeled_ids"])
    state.pool.last_suggested = list(meta["pool"]["last_suggested"])
    state.pool.annotations = annotations
    state.rngs = {k: RngStream.from_state(v) for k, v in meta["rngs"].items()}
    state.report.rows = meta["report"]["rows"]
    state.report.loss_curve = meta["report"]["loss_curve"]
    state.report.suggestion_log = meta["report"]["suggestion_log"]
    state.completed_iterations = meta["completed_iterations"]

    t0 = time.time()
    for iteration in range(state.completed_iterations + 1, config.n_iterations + 1):
        _run_iteration(state, iteration, annotator)
        if checkpoint_path:
            save_loop_checkpoint(state, checkpoint_path)
    state.report.wall_clock = time.time() - t0
    return state.report


# -- experiment drivers ---------------------------------------------------------


def compare_strategies(base_config, strategies, repetitions, dataset, vae):
    """Repeat each strategy with repetition-indexed seeds and compare.

    Returns a report dict with per-strategy aggregates and a Wilcoxon
    signed-rank p-value between the two top performers (paired by
    repetition).
    """
    if len(strategies) < 2:
        raise ValueError("need >= 2 strategies")
    if repetitions < 5:
        raise ValueError("need >= 5 repetitions")
    finals = {}
    for strat in strategies:
        finals[strat] = []
        for rep in range(repetitions):
            cfg = replace(base_config, strategy=strat, seed=base_config.seed + rep)
            report = run_loop(cfg, dataset, vae, OracleAnnotator(dataset))
            finals[strat].append(report.final_mean_dice)
    blocks = []
    for strat in strategies:
        vals = finals[strat]
        blocks.append(
            {
                "strategy": strat,
                "final_dice_per_rep": vals,
                "mean_final_dice": float(np.mean(vals)),
                "std_final_dice": float(np.std(vals)),
            }
        )
    ranked = sorted(blocks, key=lambda b: -b["mean_final_dice"])
    top_a, top_b = ranked[0], ranked[1]
    try:
        wres = wilcoxon_signed_rank(
            top_a["final_dice_per_rep"], top_b["final_dice_per_rep"]
        )
        wilcoxon = {
            "strategies": [top_a["strategy"], top_b["strategy"]],
            "statistic": wres.statistic,
            "p_value": wres.p_value,
            "exact": wres.exact,
        }
    except DegeneratePairs:
        wilcoxon = {
            "strategies": [top_a["strategy"], top_b["strategy"]],
            "result": "identical",
        }
    return {"repetitions": repetitions, "blocks": blocks, "wilcoxon_top_two": wilcoxon}


def ablate(base_config, grid, repetitions, dataset, vaes):
    """Grid study: one compare-style block per (z_dim, angular) point.

    `grid` is a list of (z_dim, angular_on) pairs; `vaes` maps z_dim to a
    trained Vae. Angular-off runs use cos_threshold = -1 (cone = everything).
    """
    blocks = []
    for z_dim, angular_on in grid:
        cos_thr = base_config.cos_threshold if angular_on else -1.0
        finals = []
        for rep in range(repetitions):
            cfg = replace(
                base_config,
                strategy="gradient",
                z_dim=z_dim,
                cos_threshold=cos_thr,
                seed=base_config.seed + rep,
            )
            report = run_loop(cfg, dataset, vaes[z_dim], OracleAnnotator(dataset))
            finals.append(report.final_mean_dice)
        blocks.append(
            {
                "z_dim": z_dim,
                "angular": bool(angular_on),
                "cos_threshold": cos_thr,
                "final_dice_per_rep": finals,
                "mean_final_dice": float(np.mean(finals)),
                "std_final_dice": float(np.std(finals)),
            }
        )
    return {"repetitions": repetitions, "blocks": blocks}
