"""Time-frequency analysis/synthesis, phase-sensitive masks and the two
training objectives (channel-weight MSE and the magnitude + temporal
spectrum approximation loss) as plain evaluable functions.

Spectrogram layout is ``(frames, bins)`` throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

from .errors import (
    InputTooShortError,
    OutOfRangeError,
    ParamsMismatchError,
    ShapeMismatchError,
)

MAG_FLOOR = 1e-10

_WINDOWS = ("sqrt-hamming", "sqrt-hann")


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 8000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.shape[0]

    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))


@dataclass(frozen=True)
class FrameParams:
    """Framing for the STFT.

    Defaults give 32 ms frames with a 16 ms shift at 8 kHz, i.e. 129 bins.
    """

    frame_len: int = 256
    hop: int = 128
    fft_size: int = 256
    window: str = "sqrt-hamming"

    def __post_init__(self):
        if not (0 < self.hop <= self.frame_len <= self.fft_size):
            raise ValueError(
                f"need 0 < hop <= frame_len <= fft_size, got "
                f"{self.hop}/{self.frame_len}/{self.fft_size}"
            )
        if self.window not in _WINDOWS:
            raise ValueError(f"unknown window {self.window!r}; choose from {_WINDOWS}")
        ana, syn = self.windows()
        env = _overlap_envelope(ana * syn, self.hop)
        if np.ptp(env) > 1e-9 * np.max(env):
            raise ValueError(
                f"window {self.window!r} is not COLA at hop {self.hop} "
                f"(frame_len {self.frame_len})"
            )

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    def windows(self) -> tuple[np.ndarray, np.ndarray]:
        """Analysis and synthesis windows (identical square-root tapers)."""
        base = self.window.split("-", 1)[1]
        w = np.sqrt(get_window(base, self.frame_len, fftbins=True))
        return w, w

    def cola_gain(self) -> float:
        ana, syn = self.windows()
        return float(np.mean(_overlap_envelope(ana * syn, self.hop)))


def _overlap_envelope(w: np.ndarray, hop: int) -> np.ndarray:
    """Steady-state sum of ``w`` shifted by multiples of ``hop`` (one period)."""
    n = len(w)
    env = np.zeros(hop)
    for start in range(0, n, hop):
        seg = w[start:start + hop]
        env[: len(seg)] += seg
    return env


@dataclass
class Spectrogram:
    bins: np.ndarray
    params: FrameParams = field(default_factory=FrameParams)
    sample_rate: int = 8000

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        if self.bins.ndim != 2 or self.bins.shape[1] != self.params.num_bins:
            raise ShapeMismatchError(
                f"spectrogram must be (T, {self.params.num_bins}), got {self.bins.shape}"
            )
        if not np.all(np.isfinite(self.bins)):
            raise ValueError("spectrogram contains non-finite entries")

    @property
    def shape(self):
        return self.bins.shape

    @property
    def num_frames(self) -> int:
        return self.bins.shape[0]

    def magnitude(self) -> np.ndarray:
        return np.abs(self.bins)


@dataclass
class Mask:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeMismatchError(f"mask must be 2-D, got shape {self.values.shape}")
        if np.any(self.values < 0) or np.any(self.values > 1) or not np.all(np.isfinite(self.values)):
            raise OutOfRangeError("mask entries must lie in [0, 1]")

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class LossConfig:
    w_d: float = 1.0
    w_c: float = 1.0
    delta_window: int = 2

    def __post_init__(self):
        if self.w_d < 0 or self.w_c < 0:
            raise ValueError("loss weights must be nonnegative")
        if int(self.delta_window) != self.delta_window or self.delta_window < 1:
            raise ValueError("delta_window must be a positive integer")


def num_frames(length: int, params: FrameParams) -> int:
    if length < params.frame_len:
        raise InputTooShortError(
            f"signal of {length} samples is shorter than one frame ({params.frame_len})"
        )
    return (length - params.frame_len) // params.hop + 1


def stft(wave: Waveform, params: FrameParams | None = None) -> Spectrogram:
    params = params or FrameParams()
    x = wave.samples
    n_frames = num_frames(len(x), params)
    ana, _ = params.windows()
    idx = np.arange(params.frame_len)[None, :] + params.hop * np.arange(n_frames)[:, None]
    frames = x[idx] * ana
    bins = np.fft.rfft(frames, n=params.fft_size, axis=1)
    return Spectrogram(bins, params, wave.sample_rate)


def istft(spec: Spectrogram, params: FrameParams | None = None) -> Waveform:
    """Weighted overlap-add synthesis.

    The output is normalised by the overlapped analysis*synthesis window
    envelope, so the fully overlapped interior is reconstructed exactly and
    the edges are reconstructed wherever the envelope is nonzero.
    """
    if params is not None and params != spec.params:
        raise ParamsMismatchError(f"spectrogram was built with {spec.params}, not {params}")
    params = spec.params
    n_frames = spec.num_frames
    ana, syn = params.windows()
    frames = np.fft.irfft(spec.bins, n=params.fft_size, axis=1)[:, : params.frame_len]
    length = (n_frames - 1) * params.hop + params.frame_len
    out = np.zeros(length)
    env = np.zeros(length)
    ww = ana * syn
    for t in range(n_frames):
        s = t * params.hop
        out[s:s + params.frame_len] += frames[t] * syn
        env[s:s + params.frame_len] += ww
    nz = env > 1e-8 * params.cola_gain()
    out[nz] /= env[nz]
    out[~nz] = 0.0
    return Waveform(out, spec.sample_rate)


def _check_same(a: Spectrogram, b: Spectrogram):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.params != b.params:
        raise ParamsMismatchError("spectrograms use different frame parameters")


def phase_sensitive_target(target: Spectrogram, mixture: Spectrogram) -> np.ndarray:
    """``|X| cos(theta_y - theta_x)``, the reference magnitude of the PSM loss."""
    _check_same(target, mixture)
    mag_y = np.abs(mixture.bins)
    ref = np.zeros(mag_y.shape)
    ok = mag_y >= MAG_FLOOR
    # |X| cos(dtheta) = Re(X conj(Y)) / |Y|
    ref[ok] = np.real(target.bins[ok] * np.conj(mixture.bins[ok])) / mag_y[ok]
    return ref


def phase_sensitive_mask(target: Spectrogram, mixture: Spectrogram) -> Mask:
    _check_same(target, mixture)
    mag_y = np.abs(mixture.bins)
    ratio = np.zeros(mag_y.shape)
    ok = mag_y >= MAG_FLOOR
    ratio[ok] = np.real(target.bins[ok] * np.conj(mixture.bins[ok])) / mag_y[ok] ** 2
    return Mask(np.clip(ratio, 0.0, 1.0))


def apply_mask(mask: Mask, mixture: Spectrogram) -> np.ndarray:
    """Estimated target magnitude ``M * |Y|``."""
    if mask.shape != mixture.shape:
        raise ShapeMismatchError(f"mask {mask.shape} vs mixture {mixture.shape}")
    return mask.values * np.abs(mixture.bins)


def masked_reconstruction(mask: Mask, mixture: Spectrogram) -> Spectrogram:
    """Masked magnitude recombined with the mixture phase."""
    if mask.shape != mixture.shape:
        raise ShapeMismatchError(f"mask {mask.shape} vs mixture {mixture.shape}")
    return Spectrogram(mask.values * mixture.bins, mixture.params, mixture.sample_rate)


def delta_features(m, half_width: int = 2, order: int = 1) -> np.ndarray:
    """Regression deltas along the time axis (axis 0) with edge replication.

    ``d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2)``; order 2 applies it twice.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if half_width < 1:
        raise ValueError("half_width must be >= 1")
    n_frames = m.shape[0]
    if n_frames < 2 * half_width + 1:
        raise InputTooShortError(
            f"{n_frames} frames are too few for half-width {half_width}"
        )
    out = m
    for _ in range(order):
        out = _delta_once(out, half_width)
    return out


def _delta_once(m: np.ndarray, half_width: int) -> np.ndarray:
    padded = np.pad(m, ((half_width, half_width), (0, 0)), mode="edge")
    n_frames = m.shape[0]
    denom = 2.0 * sum(n * n for n in range(1, half_width + 1))
    out = np.zeros_like(m)
    for n in range(1, half_width + 1):
        ahead = padded[half_width + n:half_width + n + n_frames]
        behind = padded[half_width - n:half_width - n + n_frames]
        out += n * (ahead - behind)
    return out / denom


def loss_j1(q, snr_u) -> float:
    """Mean squared error between estimated weights and utterance-level SNRs."""
    q = np.asarray(q, dtype=np.float64)
    snr_u = np.asarray(snr_u, dtype=np.float64)
    if q.shape != snr_u.shape:
        raise ShapeMismatchError(f"{q.shape} vs {snr_u.shape}")
    for name, v in (("q", q), ("snr_u", snr_u)):
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise OutOfRangeError(f"{name} must lie in [0, 1]")
    return float(np.mean((q - snr_u) ** 2))


def loss_j2(est_mag, target: Spectrogram, mixture: Spectrogram,
            cfg: LossConfig | None = None) -> float:
    """Magnitude + temporal spectrum approximation loss.

    Static, delta and acceleration squared Frobenius errors against the
    phase-sensitive reference ``|X| cos(theta_y - theta_x)``, divided by the
    number of frames.
    """
    cfg = cfg or LossConfig()
    est_mag = np.asarray(est_mag, dtype=np.float64)
    ref = phase_sensitive_target(target, mixture)
    if est_mag.shape != ref.shape:
        raise ShapeMismatchError(f"estimate {est_mag.shape} vs reference {ref.shape}")
    err = est_mag - ref
    total = np.sum(err ** 2)
    # deltas are linear, so f(est) - f(ref) == f(est - ref)
    if cfg.w_d > 0:
        total += cfg.w_d * np.sum(delta_features(err, cfg.delta_window, 1) ** 2)
    if cfg.w_c > 0:
        total += cfg.w_c * np.sum(delta_features(err, cfg.delta_window, 2) ** 2)
    return float(total / err.shape[0])
