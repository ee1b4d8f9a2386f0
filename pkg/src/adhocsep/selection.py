"""Test-time channel selection from a vector of channel weights.

Four rules: one-best, fixed-N-best, automatic N-best (ratio threshold) and
soft N-best (automatic support, weights kept as gains).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OutOfRangeError, SelectionError
from .weighting import ChannelWeights

ALGORITHMS = ("one-best", "fixed-n", "auto-n", "soft-n")


@dataclass
class SelectionMask:
    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64).reshape(-1)
        if self.p.size and not (self.p.min() >= 0.0 and self.p.max() <= 1.0):
            raise OutOfRangeError("selection entries must lie in [0, 1]")

    def __len__(self):
        return self.p.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.p > 0)

    def to_json(self, path=None) -> str:
        text = json.dumps([float(v) for v in self.p])
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, path) -> "SelectionMask":
        return cls(np.asarray(json.loads(Path(path).read_text()), dtype=np.float64))


def default_n(num_channels: int) -> int:
    # round-half-up so W = 2 gives 1 and W = 12 gives 3
    return max(1, min(num_channels, int(np.floor(np.sqrt(num_channels) + 0.5))))


@dataclass(frozen=True)
class SelectionConfig:
    algorithm: str = "auto-n"
    n: int | None = None
    gamma: float = 0.5

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.n is not None and self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")

    def apply(self, q) -> SelectionMask:
        return select(q, self)


def _weights(q) -> np.ndarray:
    if isinstance(q, ChannelWeights):
        return q.q
    return ChannelWeights(q).q


def _argmax(q: np.ndarray) -> int:
    if q.size == 0:
        raise SelectionError("empty weight vector")
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    return int(np.argmax(q))


def select_one_best(q) -> SelectionMask:
    q = _weights(q)
    p = np.zeros(q.shape)
    p[_argmax(q)] = 1.0
    return SelectionMask(p)


def select_fixed_n_best(q, n: int) -> SelectionMask:
    q = _weights(q)
    if q.size == 0:
        raise SelectionError("empty weight vector")
    if int(n) != n or not 1 <= n <= q.size:
        raise SelectionError(f"n must be an integer in [1, {q.size}], got {n}")
    # stable sort on -q keeps lower indices first among equal weights
    order = np.argsort(-q, kind="stable")
    p = np.zeros(q.shape)
    p[order[: int(n)]] = 1.0
    return SelectionMask(p)


def quality_ratio(q) -> np.ndarray:
    """``r_j = (q_j / q*) * (1 - q*) / (1 - q_j)``, with ``r_j = 1`` where ``q_j = 1``."""
    return _ratio(_weights(q))


def _ratio(q: np.ndarray) -> np.ndarray:
    best = q[_argmax(q)]
    if best <= 0.0:
        raise SelectionError("all channel weights are zero; no usable channel")
    r = np.ones(q.shape)
    ok = q < 1.0
    r[ok] = (q[ok] / best) * ((1.0 - best) / (1.0 - q[ok]))
    return r


def _auto_support(q: np.ndarray, gamma: float) -> np.ndarray:
    if not 0.0 <= gamma <= 1.0:
        raise SelectionError(f"gamma must lie in [0, 1], got {gamma}")
    keep = _ratio(q) > gamma
    keep[_argmax(q)] = True
    return keep


def select_auto_n_best(q, gamma: float) -> SelectionMask:
    q = _weights(q)
    return SelectionMask(_auto_support(q, gamma).astype(np.float64))


def select_soft_n_best(q, gamma: float) -> SelectionMask:
    q = _weights(q)
    return SelectionMask(np.where(_auto_support(q, gamma), q, 0.0))


def select(q, cfg: SelectionConfig) -> SelectionMask:
    q = _weights(q)
    if cfg.algorithm == "one-best":
        return select_one_best(q)
    if cfg.algorithm == "fixed-n":
        return select_fixed_n_best(q, cfg.n if cfg.n is not None else default_n(q.size))
    if cfg.algorithm == "auto-n":
        return select_auto_n_best(q, cfg.gamma)
    return select_soft_n_best(q, cfg.gamma)
