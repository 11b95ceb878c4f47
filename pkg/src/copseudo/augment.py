"""Weak and strong stochastic input transforms.

Vectors get Gaussian jitter (weak) or heavier jitter plus coordinate
dropout (strong).  Images get flip/translate (weak) or two operations
drawn from {flip, translate, brightness, cutout} (strong).  Each
``AugmentStream`` owns its generator so call order alone determines the
sequence of views.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import CIFAR_IMAGE_SHAPE
from .errors import ConfigError

BRIGHTNESS_RANGE = (0.6, 1.4)
CUTOUT_SIZE = 8
CUTOUT_FILL = 0.5
NUM_STRONG_OPS = 2
_STRONG_OP_COUNT = 4  # flip, translate, brightness, cutout


@dataclass(frozen=True)
class AugmentConfig:
    sigma_weak: float = 0.05
    sigma_strong: float = 0.25
    vector_drop_prob: float = 0.1
    image_shift_weak: int = 4
    image_shift_strong: int = 8

    def __post_init__(self):
        problems = []
        for name in ("sigma_weak", "sigma_strong"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                problems.append(f"{name} must be a non-negative finite real")
        if not (0.0 <= self.vector_drop_prob < 1.0):
            problems.append("vector_drop_prob must lie in [0, 1)")
        for name in ("image_shift_weak", "image_shift_strong"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 0):
                problems.append(f"{name} must be a non-negative integer")
        if problems:
            raise ConfigError("invalid augment config: " + "; ".join(problems))


def weak_vector(x: np.ndarray, rng, cfg: AugmentConfig) -> np.ndarray:
    return x + cfg.sigma_weak * rng.standard_normal(x.shape)


def strong_vector(x: np.ndarray, rng, cfg: AugmentConfig) -> np.ndarray:
    out = x + cfg.sigma_strong * rng.standard_normal(x.shape)
    drop = rng.random(x.shape) < cfg.vector_drop_prob
    out[drop] = 0.0
    return out


def _flip(img: np.ndarray) -> np.ndarray:
    return img[:, :, ::-1]


def _translate(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift content by dx columns and dy rows, zero-filling exposed pixels."""
    _, h, w = img.shape
    out = np.zeros_like(img)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    dst_r = slice(max(dy, 0), h + min(dy, 0))
    dst_c = slice(max(dx, 0), w + min(dx, 0))
    src_r = slice(max(-dy, 0), h + min(-dy, 0))
    src_c = slice(max(-dx, 0), w + min(-dx, 0))
    out[:, dst_r, dst_c] = img[:, src_r, src_c]
    return out


def weak_image(img: np.ndarray, rng, cfg: AugmentConfig) -> np.ndarray:
    if rng.random() < 0.5:
        img = _flip(img)
    s = cfg.image_shift_weak
    dx, dy = (int(v) for v in rng.integers(-s, s + 1, size=2))
    return _translate(img, dx, dy).copy()


def _draw_strong_ops(rng) -> np.ndarray:
    """Two independent draws from the four strong image operations."""
    return rng.integers(0, _STRONG_OP_COUNT, size=NUM_STRONG_OPS)


def strong_image(img: np.ndarray, rng, cfg: AugmentConfig) -> np.ndarray:
    out = img.copy()
    for op in _draw_strong_ops(rng):
        if op == 0:
            out = _flip(out).copy()
        elif op == 1:
            s = cfg.image_shift_strong
            dx, dy = (int(v) for v in rng.integers(-s, s + 1, size=2))
            out = _translate(out, dx, dy)
        elif op == 2:
            factor = rng.uniform(*BRIGHTNESS_RANGE)
            out = np.clip(out * factor, 0.0, 1.0)
        else:
            _, h, w = out.shape
            top, left = (int(v) for v in
                         rng.integers(0, min(h, w) - CUTOUT_SIZE + 1, size=2))
            out[:, top:top + CUTOUT_SIZE, left:left + CUTOUT_SIZE] = CUTOUT_FILL
    return out


class AugmentStream:
    """Stateful source of augmented views for one (kind, consumer) pair."""

    def __init__(self, kind: str, modality: str, seed,
                 config: AugmentConfig | None = None,
                 feature_shape: tuple[int, ...] | None = None):
        if kind not in ("weak", "strong"):
            raise ConfigError(f"kind must be 'weak' or 'strong', got {kind!r}")
        if modality not in ("vector", "image"):
            raise ConfigError(f"modality must be 'vector' or 'image', got {modality!r}")
        self.kind = kind
        self.modality = modality
        self.config = config or AugmentConfig()
        if modality == "image":
            self.feature_shape = tuple(feature_shape) if feature_shape else CIFAR_IMAGE_SHAPE
            if len(self.feature_shape) != 3:
                raise ConfigError("image feature_shape must be (channels, height, width)")
            side = min(self.feature_shape[1:])
            if side < CUTOUT_SIZE:
                raise ConfigError(f"image sides must be >= {CUTOUT_SIZE}")
        else:
            self.feature_shape = tuple(feature_shape) if feature_shape else None
        self.rng = np.random.default_rng(seed)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Augment one flat feature vector; returns a new flat array."""
        x = np.asarray(x, dtype=np.float64)
        if self.modality == "vector":
            fn = weak_vector if self.kind == "weak" else strong_vector
            return fn(x, self.rng, self.config)
        img = x.reshape(self.feature_shape)
        fn = weak_image if self.kind == "weak" else strong_image
        return fn(img, self.rng, self.config).reshape(-1)

    def apply_batch(self, xs: np.ndarray) -> np.ndarray:
        """Augment each row independently, in row order."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2:
            raise ConfigError("apply_batch expects a 2-d array")
        if xs.shape[0] == 0:
            return xs.copy()
        return np.stack([self.apply(row) for row in xs])
