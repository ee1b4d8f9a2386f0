"""Per-channel target quality (utterance-level SNR) and weight estimators."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .dsp import Waveform
from .errors import OutOfRangeError, ShapeMismatchError, SilentInputError
from .room import MixtureRecord


@dataclass
class ChannelWeights:
    q: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64).reshape(-1)
        # NaN fails both comparisons, inf fails the upper one
        if self.q.size and not (self.q.min() >= 0.0 and self.q.max() <= 1.0):
            raise OutOfRangeError("channel weights must lie in [0, 1]")

    def __len__(self):
        return self.q.shape[0]

    def to_json(self, path=None) -> str:
        text = json.dumps([float(v) for v in self.q])
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source) -> "ChannelWeights":
        """Read a JSON array, or an object keyed by channel index."""
        p = Path(source) if not str(source).lstrip().startswith(("[", "{")) else None
        data = json.loads(p.read_text() if p is not None else source)
        if isinstance(data, dict):
            keys = sorted(int(k) for k in data)
            if keys != list(range(len(keys))):
                raise ValueError(f"weight keys must be 0..W-1, got {keys}")
            data = [data[str(k)] if str(k) in data else data[k] for k in keys]
        return cls(np.asarray(data, dtype=np.float64))


class WeightEstimator(Protocol):
    def estimate(self, record: MixtureRecord) -> ChannelWeights: ...


def utterance_level_snr(x_a: Waveform, x_i: Waveform) -> float:
    """L1 ratio ``sum|x_a| / (sum|x_a| + sum|x_i|)``."""
    a = np.asarray(getattr(x_a, "samples", x_a), dtype=np.float64)
    i = np.asarray(getattr(x_i, "samples", x_i), dtype=np.float64)
    if a.shape != i.shape:
        raise ShapeMismatchError(f"length mismatch: {a.shape} vs {i.shape}")
    sa = float(np.sum(np.abs(a)))
    si = float(np.sum(np.abs(i)))
    if sa + si == 0.0:
        raise SilentInputError("both signals are zero; the ratio is undefined")
    return sa / (sa + si)


_MODES = ("direct_only", "reverberant")


def oracle_weights(record: MixtureRecord, mode: str = "direct_only") -> ChannelWeights:
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    if mode == "direct_only":
        tgt, itf = record.target_direct, record.interf_direct
    else:
        tgt, itf = record.target_image, record.interf_image
    if not tgt or not itf or len(tgt) != record.num_channels or len(itf) != record.num_channels:
        raise ValueError(f"record lacks per-channel {mode} images")
    return ChannelWeights([utterance_level_snr(a, i) for a, i in zip(tgt, itf)])


def noisy_oracle_weights(record: MixtureRecord, sigma: float, seed: int,
                         mode: str = "direct_only") -> ChannelWeights:
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    q = oracle_weights(record, mode).q
    if sigma == 0:
        return ChannelWeights(q)
    rng = np.random.default_rng(seed)
    return ChannelWeights(np.clip(q + rng.normal(0.0, sigma, q.shape), 0.0, 1.0))


@dataclass
class OracleEstimator:
    mode: str = "direct_only"
    sigma: float = 0.0
    seed: int = 0

    def estimate(self, record: MixtureRecord) -> ChannelWeights:
        return noisy_oracle_weights(record, self.sigma, self.seed, self.mode)


@dataclass
class FileEstimator:
    """Weights injected from a JSON file produced elsewhere."""
    path: str

    def estimate(self, record: MixtureRecord) -> ChannelWeights:
        w = ChannelWeights.from_json(self.path)
        if len(w) != record.num_channels:
            raise ShapeMismatchError(
                f"{self.path} holds {len(w)} weights for {record.num_channels} channels"
            )
        return w
