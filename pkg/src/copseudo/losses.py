"""Per-model training objectives and inverse-propensity baseline losses.

The main path combines a supervised cross-entropy term with a
mask-weighted unlabeled term built from fusion decisions.  The baseline
path (cap_loss / cai_loss) implements propensity-corrected and
confidence-gated losses over a mixed labeled/unlabeled set; these are
verified formula implementations used for diagnostics, not wired into
the training loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_PROB_FLOOR = 1e-300  # keeps log() finite; -log(floor) ~ 690


@dataclass(frozen=True)
class ObjectiveConfig:
    """Weights and shapes of the per-model objective."""

    lambda_u: float = 1.0
    shared_unlabeled: bool = True
    mu: float = 7.0
    batch_size: int = 64

    def __post_init__(self):
        problems = []
        if not (self.lambda_u >= 0 and math.isfinite(self.lambda_u)):
            problems.append("lambda_u must be a non-negative finite real")
        if not (self.mu > 0 and math.isfinite(self.mu)):
            problems.append("mu must be a positive finite real")
        if not (isinstance(self.batch_size, int) and self.batch_size >= 1):
            problems.append("batch_size must be a positive integer")
        else:
            mu_b = self.mu * self.batch_size
            if abs(mu_b - round(mu_b)) > 1e-9 or round(mu_b) < 1:
                problems.append("mu * batch_size must be a positive integer")
        if problems:
            raise ConfigError("invalid objective config: " + "; ".join(problems))

    @property
    def unlabeled_batch_size(self) -> int:
        return int(round(self.mu * self.batch_size))


def supervised_loss(probs, labels) -> float:
    """Mean cross-entropy of predicted distributions against known labels."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ConfigError("supervised_loss needs a non-empty batch")
    if labels.shape != (probs.shape[0],):
        raise ConfigError("labels must match the batch length")
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ConfigError("label out of range")
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, _PROB_FLOOR)).mean())


def unlabeled_loss(probs_strong, decisions, model_index: int) -> float:
    """Mask-weighted mean cross-entropy against pseudo-labels.

    ``probs_strong`` holds this model's predictions on its strong views of
    the unlabeled batch; items without a pseudo-label contribute zero.
    """
    probs_strong = np.asarray(probs_strong, dtype=np.float64)
    decisions = list(decisions)
    if probs_strong.ndim != 2 or probs_strong.shape[0] != len(decisions):
        raise ConfigError("predictions and decisions must have equal length")
    if not decisions:
        raise ConfigError("unlabeled_loss needs a non-empty batch")
    total = 0.0
    for row, decision in zip(probs_strong, decisions):
        if model_index >= len(decision.masks):
            raise ConfigError(
                f"model_index {model_index} out of range for "
                f"{len(decision.masks)}-model decisions")
        if not decision.has_label:
            continue
        mask = decision.masks[model_index]
        if mask == 0.0:
            continue
        p = max(float(row[decision.pseudo_label]), _PROB_FLOOR)
        total += mask * -math.log(p)
    return total / len(decisions)


def total_objective(l_s: float, l_u_all, model_index: int,
                    cfg: ObjectiveConfig) -> float:
    """Supervised term plus the weighted unlabeled term.

    With ``shared_unlabeled`` every model's unlabeled loss is summed into
    each objective; otherwise each model sees only its own.
    """
    l_u_all = tuple(float(v) for v in l_u_all)
    if not (0 <= model_index < len(l_u_all)):
        raise ConfigError("model_index out of range")
    if cfg.shared_unlabeled:
        return l_s + cfg.lambda_u * sum(l_u_all)
    return l_s + cfg.lambda_u * l_u_all[model_index]


@dataclass(frozen=True)
class CadrInputs:
    """Per-item ingredients for the baseline losses.

    ``missing`` is 1 where the label is hidden.  ``propensity`` is the
    per-item probability of being labeled; ``confidence`` and
    ``threshold`` gate the unlabeled term; ``sup_losses`` / ``unsup_losses``
    are caller-computed per-item loss values (any loss works; the gating
    and weighting here do not depend on the choice).
    """

    missing: np.ndarray
    sup_losses: np.ndarray
    propensity: np.ndarray
    unsup_losses: np.ndarray
    confidence: np.ndarray
    threshold: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("missing", "sup_losses", "propensity", "unsup_losses",
                     "confidence", "threshold"):
            arrays[name] = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arrays[name])
        n = arrays["missing"].shape
        if len(n) != 1 or n[0] == 0:
            raise ConfigError("CadrInputs needs non-empty 1-d arrays")
        if any(a.shape != n for a in arrays.values()):
            raise ConfigError("CadrInputs arrays must share one length")
        if not np.isin(arrays["missing"], (0.0, 1.0)).all():
            raise ConfigError("missing indicators must be 0 or 1")

    def __len__(self) -> int:
        return self.missing.shape[0]


def cap_loss(inputs: CadrInputs) -> float:
    """Propensity-corrected supervised loss over the observed items:
    mean over ALL items of (1 - r) * l_s / p."""
    observed = inputs.missing == 0.0
    if (inputs.propensity[observed] <= 0.0).any():
        raise ConfigError("propensity must be positive on observed items")
    terms = np.zeros(len(inputs))
    terms[observed] = inputs.sup_losses[observed] / inputs.propensity[observed]
    return float(terms.sum() / len(inputs))


def cai_loss(inputs: CadrInputs) -> float:
    """Confidence-gated unlabeled loss plus supervised loss, averaged over
    all items; the gate is strict (confidence must exceed the threshold)."""
    observed = inputs.missing == 0.0
    gate = inputs.confidence > inputs.threshold
    unsup = np.where(~observed & gate, inputs.unsup_losses, 0.0)
    sup = np.where(observed, inputs.sup_losses, 0.0)
    return float((unsup + sup).sum() / len(inputs))


def estimate_propensity(dataset) -> np.ndarray:
    """Per-class labeled fraction, via the evaluation-only label accessor.

    Diagnostic helper for feeding cap_loss on synthetic studies.  It reads
    hidden ground-truth labels, so it must never sit on a training path.
    Classes with no samples get nan.
    """
    labels = dataset.eval_labels()
    observed = dataset.missing == 0
    out = np.full(dataset.num_classes, np.nan)
    for c in range(dataset.num_classes):
        in_class = labels == c
        if in_class.any():
            out[c] = observed[in_class].mean()
    return out
