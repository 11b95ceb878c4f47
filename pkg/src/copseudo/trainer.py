"""Lock-step multi-model training loop.

Each step: every model computes a supervised loss on its own weakly
augmented labeled batch; all models predict on ONE shared weak view of
the unlabeled batch; those predictions are fused per item into
pseudo-labels and per-model masks; every model computes its unlabeled
loss on its own strong views; all parameter updates are applied after
every gradient is computed, so the models never see each other
mid-step.
"""
from __future__ import annotations

import copy
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .augment import AugmentConfig, AugmentStream
from .data import MaskedDataset
from .errors import ConfigError
from .fusion import (
    SOURCE_BOTH,
    SOURCE_CONFLICT,
    SOURCE_CONSENSUS,
    SOURCE_NONE,
    SOURCE_OWN,
    FusionConfig,
    fuse_cascade,
    fuse_pair,
    fuse_single,
    mask_ratio,
)
from .losses import ObjectiveConfig, supervised_loss, total_objective
from .metrics import MetricsRow, RunMetrics, emit_csv, emit_plot_columns
from .predictor import (
    add_scaled,
    init_model,
    init_opt_state,
    loss_and_grad,
    predict_proba,
    save_checkpoint,
    sgd_step,
)

CONFIG_FILENAME = "config.resolved"
METRICS_FILENAME = "metrics.csv"


@dataclass(frozen=True)
class SeedPlan:
    """Every random stream in a run, named and explicit."""

    init: tuple[int, ...]
    data_order: tuple[int, ...]
    augment: tuple[int, ...]
    fusion: int
    unlabeled_order: int
    unlabeled_weak: int

    def __post_init__(self):
        lengths = {len(self.init), len(self.data_order), len(self.augment)}
        if len(lengths) != 1:
            raise ConfigError("per-model seed tuples must have equal length")

    @property
    def num_models(self) -> int:
        return len(self.init)

    @classmethod
    def from_master(cls, master: int, num_models: int) -> "SeedPlan":
        if num_models < 1:
            raise ConfigError("num_models must be >= 1")
        state = np.random.SeedSequence(master).generate_state(3 * num_models + 3)
        vals = [int(v) for v in state]
        return cls(
            init=tuple(vals[0:num_models]),
            data_order=tuple(vals[num_models:2 * num_models]),
            augment=tuple(vals[2 * num_models:3 * num_models]),
            fusion=vals[3 * num_models],
            unlabeled_order=vals[3 * num_models + 1],
            unlabeled_weak=vals[3 * num_models + 2],
        )


@dataclass(frozen=True)
class TrainConfig:
    seeds: SeedPlan
    num_models: int = 2
    steps: int = 2000
    eval_every: int = 50
    hidden: tuple[int, ...] = (32,)
    fusion: FusionConfig = FusionConfig()
    objective: ObjectiveConfig = ObjectiveConfig()
    aug: AugmentConfig = AugmentConfig()
    lr: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 5e-4
    cosine_lr: bool = False
    dump_predictions_every: int = 0

    def __post_init__(self):
        problems = []
        if self.num_models < 1:
            problems.append("num_models must be >= 1")
        if self.steps < 0:
            problems.append("steps must be >= 0 (0 runs the initial "
                            "evaluation only)")
        if self.eval_every < 1:
            problems.append("eval_every must be >= 1")
        if self.dump_predictions_every < 0:
            problems.append("dump_predictions_every must be >= 0")
        if not self.hidden or any(h < 1 for h in self.hidden):
            problems.append("hidden layer sizes must be positive")
        if self.fusion.num_models != self.num_models:
            problems.append(
                f"fusion config is for {self.fusion.num_models} models, "
                f"trainer for {self.num_models}")
        if self.num_models == 1 and not self.fusion.single_model_mode:
            problems.append("a one-model run requires single_model_mode")
        if self.seeds.num_models != self.num_models:
            problems.append(
                f"seed plan covers {self.seeds.num_models} models, "
                f"trainer needs {self.num_models}")
        if not (self.lr > 0 and math.isfinite(self.lr)):
            problems.append("lr must be a positive finite real")
        if not (0.0 <= self.momentum < 1.0):
            problems.append("momentum must lie in [0, 1)")
        if not (self.weight_decay >= 0 and math.isfinite(self.weight_decay)):
            problems.append("weight_decay must be a non-negative finite real")
        if problems:
            raise ConfigError("invalid train config: " + "; ".join(problems))


@dataclass(frozen=True)
class StepMetrics:
    """Quantities of one training step.

    ``source_counts`` is (both, conflict, own, consensus, none) over the
    unlabeled batch; in single-model mode it is taken from model 1 while
    mask_ratio and pseudo-label accuracy pool every model's decisions.
    """

    step: int
    train_losses: tuple[float, ...]
    mask_ratio: float
    pseudo_acc: float
    source_counts: tuple[int, int, int, int, int]


class ShuffleCycler:
    """Endless stream of dataset indices: reshuffles when exhausted."""

    def __init__(self, indices, seed):
        self._indices = np.asarray(indices, dtype=np.int64)
        if self._indices.size == 0:
            raise ConfigError("cannot cycle an empty index set")
        self._rng = np.random.default_rng(seed)
        self._order = np.empty(0, dtype=np.int64)
        self._pos = 0

    def take(self, k: int) -> np.ndarray:
        if k < 1:
            raise ConfigError("batch size must be >= 1")
        out = np.empty(k, dtype=np.int64)
        filled = 0
        while filled < k:
            if self._pos >= self._order.size:
                self._order = self._rng.permutation(self._indices)
                self._pos = 0
            grab = min(k - filled, self._order.size - self._pos)
            out[filled:filled + grab] = self._order[self._pos:self._pos + grab]
            self._pos += grab
            filled += grab
        return out


class TrainerState:
    """Per-model parameters and every stateful stream of the loop."""

    def __init__(self, cfg: TrainConfig, ds: MaskedDataset):
        arch = (ds.features.shape[1],) + tuple(cfg.hidden) + (ds.num_classes,)
        self.params = [init_model(arch, seed=cfg.seeds.init[i])
                       for i in range(cfg.num_models)]
        self.opts = [init_opt_state(p, cfg.lr, cfg.momentum, cfg.weight_decay)
                     for p in self.params]
        mod = ds.modality
        shape = ds.feature_shape if mod == "image" else None
        self.weak_labeled = [
            AugmentStream("weak", mod, seed=[cfg.seeds.augment[i], 0],
                          config=cfg.aug, feature_shape=shape)
            for i in range(cfg.num_models)]
        self.strong_unlabeled = [
            AugmentStream("strong", mod, seed=[cfg.seeds.augment[i], 1],
                          config=cfg.aug, feature_shape=shape)
            for i in range(cfg.num_models)]
        self.weak_unlabeled = AugmentStream(
            "weak", mod, seed=cfg.seeds.unlabeled_weak, config=cfg.aug,
            feature_shape=shape)
        self.step = 0

    def clone(self) -> "TrainerState":
        return copy.deepcopy(self)


def _item_stream(fusion_seed: int, step: int, item: int):
    return np.random.default_rng([fusion_seed, step, item])


def fuse_batch(weak_probs, cfg: FusionConfig, fusion_seed: int, step: int):
    """Per-item fusion over a batch of per-model weak-view predictions.

    ``weak_probs`` is (num_models, batch, C).  Returns one decision list
    in fused modes, or a per-model list of decision lists in
    single-model mode.  Each item draws from its own seeded sub-stream,
    so items can be fused in any order (or in parallel) identically.
    """
    n, batch, _ = weak_probs.shape
    if cfg.single_model_mode:
        return [[fuse_single(weak_probs[m, b], cfg) for b in range(batch)]
                for m in range(n)]
    if n == 2:
        return [fuse_pair(weak_probs[0, b], weak_probs[1, b], cfg,
                          _item_stream(fusion_seed, step, b))
                for b in range(batch)]
    return [fuse_cascade([weak_probs[m, b] for m in range(n)], cfg,
                         _item_stream(fusion_seed, step, b))
            for b in range(batch)]


def _decision_targets(decisions, model_index: int):
    """Targets and weights for loss_and_grad: absent labels become a
    placeholder class at weight zero."""
    targets = np.zeros(len(decisions), dtype=np.int64)
    weights = np.zeros(len(decisions))
    for b, d in enumerate(decisions):
        if d.has_label:
            targets[b] = d.pseudo_label
            weights[b] = d.masks[model_index]
    return targets, weights


def _source_histogram(decisions) -> tuple[int, int, int, int, int]:
    order = (SOURCE_BOTH, SOURCE_CONFLICT, SOURCE_OWN, SOURCE_CONSENSUS,
             SOURCE_NONE)
    counts = {s: 0 for s in order}
    for d in decisions:
        counts[d.source] += 1
    return tuple(counts[s] for s in order)


def pseudo_label_accuracy(decisions, true_labels) -> float:
    """Fraction of present pseudo-labels matching the hidden truth;
    1.0 when nothing is present (n=0 case)."""
    true_labels = np.asarray(true_labels, dtype=np.int64)
    present = [(d.pseudo_label, t) for d, t in zip(decisions, true_labels)
               if d.has_label]
    if not present:
        return 1.0
    return sum(int(p == t) for p, t in present) / len(present)


def train_step(state: TrainerState, labeled_batches, unlabeled, cfg: TrainConfig,
               unlabeled_true_labels_eval_only) -> StepMetrics:
    """Advance every model one step; mutates ``state`` in place.

    ``labeled_batches`` is a per-model list of (features, labels);
    ``unlabeled`` is the shared (mu*B, d) feature block.  The true labels
    of the unlabeled items are accepted ONLY to score pseudo-label
    accuracy for the metrics row; they never touch a loss or gradient.
    """
    n = cfg.num_models
    if len(labeled_batches) != n:
        raise ConfigError(f"need {n} labeled batches, got {len(labeled_batches)}")
    batch_sizes = {xs.shape[0] for xs, _ in labeled_batches}
    if batch_sizes != {cfg.objective.batch_size}:
        raise ConfigError("labeled batch size mismatch")
    if unlabeled.shape[0] != cfg.objective.unlabeled_batch_size:
        raise ConfigError("unlabeled batch size mismatch")

    # supervised pass, per model
    sup = []
    for i, (xs, ys) in enumerate(labeled_batches):
        weak_xs = state.weak_labeled[i].apply_batch(xs)
        sup.append(loss_and_grad(state.params[i], weak_xs, ys,
                                 np.ones(len(ys))))

    # one shared weak view of the unlabeled batch, predictions per model
    weak_u = state.weak_unlabeled.apply_batch(unlabeled)
    weak_probs = np.stack([predict_proba(p, weak_u) for p in state.params])

    # fusion streams are keyed by the 1-based update index, the same index
    # that names a predictions dump, so offline re-fusion of a dump can
    # replay the exact coin flips
    fused = fuse_batch(weak_probs, cfg.fusion, cfg.seeds.fusion, state.step + 1)
    per_model_decisions = fused if cfg.fusion.single_model_mode else [fused] * n

    # unlabeled pass on per-model strong views; single-model decisions
    # carry one mask, fused decisions one per model
    unsup = []
    for i in range(n):
        strong_xs = state.strong_unlabeled[i].apply_batch(unlabeled)
        mask_index = 0 if cfg.fusion.single_model_mode else i
        targets, weights = _decision_targets(per_model_decisions[i], mask_index)
        unsup.append(loss_and_grad(state.params[i], strong_xs, targets, weights))

    # apply updates only after every model's gradients exist
    l_u_all = tuple(l for l, _ in unsup)
    train_losses = []
    lam = cfg.objective.lambda_u
    for i in range(n):
        grad = add_scaled(sup[i][1], unsup[i][1], lam)
        opt = state.opts[i]
        if cfg.cosine_lr and cfg.steps > 0:
            cur = cfg.lr * math.cos(7.0 * math.pi * state.step / (16.0 * cfg.steps))
            opt = replace(opt, lr=cur)
        state.params[i], state.opts[i] = sgd_step(state.params[i], grad, opt)
        if cfg.cosine_lr:
            state.opts[i] = replace(state.opts[i], lr=cfg.lr)
        train_losses.append(total_objective(sup[i][0], l_u_all, i, cfg.objective))

    if cfg.fusion.single_model_mode:
        ratio = float(np.mean([mask_ratio(d) for d in per_model_decisions]))
        pooled = [d for ds_ in per_model_decisions for d in ds_]
        acc = pseudo_label_accuracy(
            pooled, np.tile(unlabeled_true_labels_eval_only, n))
        hist = _source_histogram(per_model_decisions[0])
    else:
        ratio = mask_ratio(fused)
        acc = pseudo_label_accuracy(fused, unlabeled_true_labels_eval_only)
        hist = _source_histogram(fused)

    state.step += 1
    return StepMetrics(step=state.step, train_losses=tuple(train_losses),
                       mask_ratio=ratio, pseudo_acc=acc, source_counts=hist)


def evaluate(params, test: MaskedDataset) -> tuple[float, float]:
    """Accuracy and mean loss on a fully observed set, no augmentation."""
    if len(test) == 0:
        raise ConfigError("empty test set")
    if test.num_missing:
        raise ConfigError("test set must be fully observed")
    probs = predict_proba(params, test.features)
    labels = test.eval_labels()
    acc = float((probs.argmax(axis=1) == labels).mean())
    return acc, supervised_loss(probs, labels)


def _evaluate_models(params_list, test) -> tuple[float, float]:
    pairs = [evaluate(p, test) for p in params_list]
    return (float(np.mean([a for a, _ in pairs])),
            float(np.mean([l for _, l in pairs])))


def resolved_config_lines(cfg: TrainConfig) -> list[str]:
    """Flat key=value lines capturing every knob and seed, sorted."""
    kv = {
        "num_models": cfg.num_models,
        "steps": cfg.steps,
        "eval_every": cfg.eval_every,
        "hidden": ",".join(str(h) for h in cfg.hidden),
        "lr": cfg.lr,
        "momentum": cfg.momentum,
        "weight_decay": cfg.weight_decay,
        "cosine_lr": cfg.cosine_lr,
        "dump_predictions_every": cfg.dump_predictions_every,
        "tau": cfg.fusion.tau,
        "tau_cascade": ",".join(repr(t) for t in cfg.fusion.tau_cascade),
        "pseudo_weight": cfg.fusion.pseudo_weight,
        "single_model_mode": cfg.fusion.single_model_mode,
        "conflict_drop": cfg.fusion.conflict_drop,
        "lambda_u": cfg.objective.lambda_u,
        "shared_unlabeled": cfg.objective.shared_unlabeled,
        "mu": cfg.objective.mu,
        "batch_size": cfg.objective.batch_size,
        "aug.sigma_weak": cfg.aug.sigma_weak,
        "aug.sigma_strong": cfg.aug.sigma_strong,
        "aug.vector_drop_prob": cfg.aug.vector_drop_prob,
        "aug.image_shift_weak": cfg.aug.image_shift_weak,
        "aug.image_shift_strong": cfg.aug.image_shift_strong,
        "seed.fusion": cfg.seeds.fusion,
        "seed.unlabeled_order": cfg.seeds.unlabeled_order,
        "seed.unlabeled_weak": cfg.seeds.unlabeled_weak,
    }
    for i in range(cfg.num_models):
        kv[f"seed.init_m{i + 1}"] = cfg.seeds.init[i]
        kv[f"seed.data_order_m{i + 1}"] = cfg.seeds.data_order[i]
        kv[f"seed.augment_m{i + 1}"] = cfg.seeds.augment[i]
    return [f"{k}={kv[k]}" for k in sorted(kv)]


def _dump_predictions(path, weak_probs) -> None:
    """Offline-fusion input format: item,model,p0..p{C-1}; model is 1-based.

    Values carry 17 significant digits so re-parsing restores the exact
    doubles the in-run fusion saw.
    """
    n, batch, num_classes = weak_probs.shape
    with open(path, "w", encoding="ascii") as fh:
        cols = ",".join(f"p{c}" for c in range(num_classes))
        fh.write(f"item,model,{cols}\n")
        for b in range(batch):
            for m in range(n):
                vals = ",".join(format(v, ".17g") for v in weak_probs[m, b])
                fh.write(f"{b},{m + 1},{vals}\n")


def train(cfg: TrainConfig, ds: MaskedDataset, test: MaskedDataset,
          out_dir) -> str:
    """Run the loop and write the run directory; returns its path."""
    num_labeled = ds.num_observed
    if num_labeled == 0 or ds.num_missing == 0:
        raise ConfigError("training data needs at least one labeled and one "
                          "unlabeled item")
    if cfg.objective.batch_size > num_labeled:
        raise ConfigError(
            f"batch size {cfg.objective.batch_size} exceeds the "
            f"{num_labeled} labeled items")
    if len(test) == 0:
        raise ConfigError("empty test set")

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, CONFIG_FILENAME), "w",
              encoding="ascii") as fh:
        fh.write("\n".join(resolved_config_lines(cfg)) + "\n")

    state = TrainerState(cfg, ds)
    labeled_cyclers = [ShuffleCycler(ds.observed_indices(),
                                     seed=cfg.seeds.data_order[i])
                       for i in range(cfg.num_models)]
    unlabeled_cycler = ShuffleCycler(ds.missing_indices(),
                                     seed=cfg.seeds.unlabeled_order)
    metrics = RunMetrics(num_models=cfg.num_models)

    def draw_batches(cyclers, ucycler):
        labeled = []
        for i in range(cfg.num_models):
            idx = cyclers[i].take(cfg.objective.batch_size)
            labeled.append((ds.features[idx], ds.observed_labels(idx)))
        u_idx = ucycler.take(cfg.objective.unlabeled_batch_size)
        return labeled, ds.features[u_idx], ds.eval_labels(u_idx)

    def record(step_metrics: StepMetrics, eval_step: int) -> None:
        acc, loss = _evaluate_models(state.params, test)
        metrics.append(MetricsRow(
            step=eval_step, test_acc=acc, test_loss=loss,
            train_losses=step_metrics.train_losses,
            mask_ratio=step_metrics.mask_ratio,
            pseudo_acc=step_metrics.pseudo_acc,
            src_both=step_metrics.source_counts[0],
            src_conflict=step_metrics.source_counts[1],
            src_own=step_metrics.source_counts[2],
            src_consensus=step_metrics.source_counts[3],
            src_none=step_metrics.source_counts[4]))

    # step-0 row: probe one step on throwaway copies so the stream state
    # of the real loop is untouched
    probe_state = state.clone()
    probe_labeled, probe_u, probe_true = draw_batches(
        [copy.deepcopy(c) for c in labeled_cyclers],
        copy.deepcopy(unlabeled_cycler))
    probe_metrics = train_step(probe_state, probe_labeled, probe_u, cfg,
                               probe_true)
    record(probe_metrics, eval_step=0)
    del probe_state

    last = None
    for step in range(1, cfg.steps + 1):
        labeled, u_feats, u_true = draw_batches(labeled_cyclers,
                                                unlabeled_cycler)
        if cfg.dump_predictions_every and step % cfg.dump_predictions_every == 0:
            weak_u = copy.deepcopy(state.weak_unlabeled).apply_batch(u_feats)
            probs = np.stack([predict_proba(p, weak_u) for p in state.params])
            _dump_predictions(
                os.path.join(out_dir, f"predictions-step{step}.csv"), probs)
        last = train_step(state, labeled, u_feats, cfg, u_true)
        if step % cfg.eval_every == 0 or step == cfg.steps:
            record(last, eval_step=step)

    emit_csv(metrics, os.path.join(out_dir, METRICS_FILENAME))
    emit_plot_columns(metrics, out_dir)
    for i, params in enumerate(state.params):
        save_checkpoint(params, os.path.join(
            out_dir, f"ckpt-model{i + 1}-step{cfg.steps}"))
    return str(out_dir)
