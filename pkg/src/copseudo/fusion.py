"""Cross-model pseudo-label fusion.

Given each model's predicted class distribution for an unlabeled item,
decide whether the item gets a pseudo-label, which label, and what loss
weight each model applies to it.  Two entry points share one decision
vocabulary: ``fuse_pair`` is the two-model branch table, ``fuse_cascade``
generalizes it to n models via confidence levels.  Both are pure given an
explicit random generator; ties are broken by a uniform draw from it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigError

SOURCE_BOTH = "both_confident_agree"
SOURCE_CONFLICT = "conflict_coin_flip"
SOURCE_OWN = "own_confident"
SOURCE_CONSENSUS = "consensus"
SOURCE_NONE = "none"

SOURCES = (SOURCE_BOTH, SOURCE_CONFLICT, SOURCE_OWN, SOURCE_CONSENSUS, SOURCE_NONE)

PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class FusionConfig:
    """Thresholds and weights for pseudo-label fusion.

    ``tau`` is the top confidence threshold; ``tau_cascade`` holds the
    lower thresholds for agreement levels 2..n (two-model case: just the
    consensus threshold).  ``pseudo_weight`` is the loss weight a model
    applies to an item it is itself confident about.
    """

    tau: float = 0.95
    tau_cascade: tuple[float, ...] = (0.75,)
    pseudo_weight: float = 0.75
    num_models: int = 2
    single_model_mode: bool = False
    conflict_drop: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tau_cascade",
                           tuple(float(t) for t in self.tau_cascade))
        problems = []
        if not (0.0 < self.tau <= 1.0):
            problems.append("tau must lie in (0, 1]")
        if not (self.pseudo_weight >= 0 and math.isfinite(self.pseudo_weight)):
            problems.append("pseudo_weight must be a non-negative finite real")
        if self.num_models < 1:
            problems.append("num_models must be >= 1")
        if not self.single_model_mode:
            if self.num_models < 2:
                problems.append("num_models must be >= 2 unless single_model_mode")
            if len(self.tau_cascade) != self.num_models - 1:
                problems.append(
                    f"tau_cascade needs {self.num_models - 1} entries for "
                    f"{self.num_models} models, got {len(self.tau_cascade)}")
            if self.tau_cascade:
                if any(a < b for a, b in zip(self.tau_cascade, self.tau_cascade[1:])):
                    problems.append("tau_cascade must be non-ascending")
                if not (self.tau_cascade[0] < self.tau):
                    problems.append("tau_cascade[0] must be strictly below tau")
                if self.tau_cascade[-1] <= 0.0:
                    problems.append("cascade thresholds must be positive")
        if problems:
            raise ConfigError("invalid fusion config: " + "; ".join(problems))


@dataclass(frozen=True)
class FusionDecision:
    """Outcome for one unlabeled item.

    ``pseudo_label`` is None when no model combination was confident
    enough; ``masks`` holds one loss weight per model (each 0, 1, or the
    configured pseudo_weight).  ``source_model`` is 1-based; for
    consensus decisions ``source_level`` records the agreement level.
    """

    pseudo_label: int | None
    masks: tuple[float, ...]
    source: str
    source_model: int | None = None
    source_level: int | None = None

    @property
    def has_label(self) -> bool:
        return self.pseudo_label is not None


@dataclass(frozen=True)
class DebiasSubset:
    """Items on which the models agree within an epsilon ball."""

    selected: np.ndarray
    agreement: np.ndarray
    same_argmax: np.ndarray


def _check_prob_rows(qs) -> np.ndarray:
    rows = [np.asarray(q, dtype=np.float64) for q in qs]
    width = rows[0].shape
    for i, q in enumerate(rows):
        if q.ndim != 1 or q.shape[0] < 2:
            raise ConfigError(f"model {i + 1} prediction is not a probability vector")
        if q.shape != width:
            raise ConfigError("prediction vectors have mismatched lengths")
        if not np.isfinite(q).all() or q.min() < -1e-12 or q.max() > 1.0 + 1e-12:
            raise ConfigError(f"model {i + 1} prediction is not a valid distribution")
        if abs(q.sum() - 1.0) > PROB_SUM_TOL:
            raise ConfigError(f"model {i + 1} prediction does not sum to 1")
    return np.stack(rows)


def _absent(n: int, source: str = SOURCE_NONE, source_model=None,
            source_level=None) -> FusionDecision:
    return FusionDecision(pseudo_label=None, masks=(0.0,) * n, source=source,
                          source_model=source_model, source_level=source_level)


def fuse_pair(q1, q2, cfg: FusionConfig, stream) -> FusionDecision:
    """Two-model fusion branch table.

    Confidence comparisons are strict. The own-confident branch outranks
    consensus: a single model over tau decides the label alone even when
    both models would agree at the lower threshold.
    """
    if cfg.num_models != 2:
        raise ConfigError("fuse_pair requires a two-model config")
    qs = _check_prob_rows([q1, q2])
    p1, p2 = qs.max(axis=1)
    c1, c2 = (int(v) for v in qs.argmax(axis=1))
    w = cfg.pseudo_weight
    tau, tau2 = cfg.tau, cfg.tau_cascade[0]

    if p1 > tau and p2 > tau:
        if c1 == c2:
            return FusionDecision(c1, (w, w), SOURCE_BOTH)
        winner = int(stream.integers(2))
        if cfg.conflict_drop:
            return _absent(2, SOURCE_CONFLICT, source_model=winner + 1)
        return FusionDecision((c1, c2)[winner], (w, w), SOURCE_CONFLICT,
                              source_model=winner + 1)
    if p1 > tau:
        return FusionDecision(c1, (w, 1.0), SOURCE_OWN, source_model=1)
    if p2 > tau:
        return FusionDecision(c2, (1.0, w), SOURCE_OWN, source_model=2)
    if p1 > tau2 and p2 > tau2 and c1 == c2:
        return FusionDecision(c1, (1.0, 1.0), SOURCE_CONSENSUS, source_level=2)
    return _absent(2)


def fuse_single(q, cfg: FusionConfig) -> FusionDecision:
    """Threshold rule for one model alone: keep its prediction iff its
    confidence clears tau (no peers, no consensus)."""
    qs = _check_prob_rows([q])
    p = float(qs[0].max())
    c = int(qs[0].argmax())
    if p > cfg.tau:
        return FusionDecision(c, (cfg.pseudo_weight,), SOURCE_OWN, source_model=1)
    return _absent(1)


def _cascade_masks(cfg: FusionConfig, own_confident, label_present: bool):
    if not label_present:
        return (0.0,) * len(own_confident)
    return tuple(cfg.pseudo_weight if own else 1.0 for own in own_confident)


def fuse_cascade(qs, cfg: FusionConfig, stream) -> FusionDecision:
    """n-model fusion by agreement levels.

    Level 1: any single model over tau proposes its own argmax.  Level
    k >= 2: any k models all over the level's threshold and sharing one
    argmax propose that consensus label.  The smallest level with a
    proposal wins; distinct proposed labels at that level are resolved by
    a uniform draw.  With n = 2 this reproduces ``fuse_pair`` exactly,
    including the draw.
    """
    n = len(qs)
    if n < 2:
        raise ConfigError("fuse_cascade needs at least two models")
    if n != cfg.num_models:
        raise ConfigError(f"got {n} predictions for a {cfg.num_models}-model config")
    rows = _check_prob_rows(qs)
    peaks = rows.max(axis=1)
    tops = [int(v) for v in rows.argmax(axis=1)]
    own = [bool(p > cfg.tau) for p in peaks]
    w = cfg.pseudo_weight

    if any(own):
        labels, proposers = [], {}
        for i in range(n):
            if own[i] and tops[i] not in proposers:
                labels.append(tops[i])
                proposers[tops[i]] = i
        if len(labels) == 1:
            label = labels[0]
            backers = [i for i in range(n) if own[i]]
            if len(backers) >= 2:
                return FusionDecision(label, _cascade_masks(cfg, own, True),
                                      SOURCE_BOTH)
            return FusionDecision(label, _cascade_masks(cfg, own, True),
                                  SOURCE_OWN, source_model=backers[0] + 1)
        pick = int(stream.integers(len(labels)))
        label = labels[pick]
        if cfg.conflict_drop:
            return _absent(n, SOURCE_CONFLICT, source_model=proposers[label] + 1)
        return FusionDecision(label, _cascade_masks(cfg, own, True),
                              SOURCE_CONFLICT, source_model=proposers[label] + 1)

    for level in range(2, n + 1):
        threshold = cfg.tau_cascade[level - 2]
        eligible = [i for i in range(n) if peaks[i] > threshold]
        support: dict[int, list[int]] = {}
        for i in eligible:
            support.setdefault(tops[i], []).append(i)
        labels = [lab for lab, members in support.items() if len(members) >= level]
        if not labels:
            continue
        labels.sort(key=lambda lab: support[lab][0])
        if len(labels) == 1:
            label = labels[0]
        else:
            label = labels[int(stream.integers(len(labels)))]
            if cfg.conflict_drop:
                return _absent(n, SOURCE_CONFLICT, source_level=level)
        return FusionDecision(label, _cascade_masks(cfg, own, True),
                              SOURCE_CONSENSUS, source_level=level)
    return _absent(n)


def select_debias_subset(preds, epsilon: float) -> DebiasSubset:
    """Keep items where every model points at the same class and all
    pairwise prediction distances (L-infinity) are within ``epsilon``.

    The boundary is inclusive; the comparison absorbs float representation
    error up to 1e-12 so decimal inputs that land exactly on ``epsilon``
    count as within it.
    """
    if not (epsilon >= 0 and math.isfinite(epsilon)):
        raise ConfigError("epsilon must be a non-negative finite real")
    arrays = [np.asarray(p, dtype=np.float64) for p in preds]
    if len(arrays) < 2:
        raise ConfigError("need predictions from at least two models")
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays) or arrays[0].ndim != 2:
        raise ConfigError("ragged prediction sets: all models must cover the "
                          "same items and classes")
    stacked = np.stack(arrays)  # (models, items, classes)
    tops = stacked.argmax(axis=2)
    same_argmax = (tops == tops[0]).all(axis=0)
    num_items = shape[0]
    agreement = np.zeros(num_items)
    for a, b in combinations(range(len(arrays)), 2):
        dist = np.abs(stacked[a] - stacked[b]).max(axis=1)
        agreement = np.maximum(agreement, dist)
    selected = np.flatnonzero(same_argmax & (agreement <= epsilon + 1e-12))
    return DebiasSubset(selected=selected, agreement=agreement,
                        same_argmax=same_argmax)


def mask_ratio(decisions) -> float:
    """Fraction of items that received a pseudo-label."""
    decisions = list(decisions)
    if not decisions:
        raise ConfigError("mask_ratio of an empty decision list")
    return sum(d.has_label for d in decisions) / len(decisions)
