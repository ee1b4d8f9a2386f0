"""Separation-quality metrics: SI-SDR, SD-SDR, STOI and an external PESQ hook."""

from __future__ import annotations

import logging
import os
import re
import shlex
import subprocess
import tempfile
import warnings
from dataclasses import asdict, dataclass
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import correlate, resample_poly

from .dsp import Waveform
from .errors import InputTooShortError, ShapeMismatchError, SilentInputError

log = logging.getLogger(__name__)

DB_CAP = 60.0
PESQ_ENV = "ADHOCSEP_PESQ"


def _arr(x) -> np.ndarray:
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def _cap(ratio_num: float, ratio_den: float) -> float:
    if ratio_den <= 0.0:
        return DB_CAP
    if ratio_num <= 0.0:
        return -DB_CAP
    return float(np.clip(10.0 * np.log10(ratio_num / ratio_den), -DB_CAP, DB_CAP))


def _pair(estimate, reference) -> tuple[np.ndarray, np.ndarray]:
    est, ref = _arr(estimate), _arr(reference)
    if est.shape != ref.shape:
        raise ShapeMismatchError(f"length mismatch: {est.shape} vs {ref.shape}")
    if not np.any(ref):
        raise SilentInputError("reference signal is all zeros")
    return est, ref


def si_sdr(estimate, reference) -> float:
    """Scale-invariant SDR in dB, capped at +-60."""
    est, ref = _pair(estimate, reference)
    alpha = np.dot(est, ref) / np.dot(ref, ref)
    target = alpha * ref
    return _cap(np.dot(target, target), np.sum((target - est) ** 2))


def sd_sdr(estimate, reference) -> float:
    """Scale-dependent SDR: projected target energy over the raw error energy."""
    est, ref = _pair(estimate, reference)
    alpha = np.dot(est, ref) / np.dot(ref, ref)
    target = alpha * ref
    return _cap(np.dot(target, target), np.sum((ref - est) ** 2))


sdr = sd_sdr


def align(estimate, reference, max_lag: int | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Shift ``estimate`` onto ``reference`` by the cross-correlation peak.

    Returns the two overlapping segments (equal length) and the lag, positive
    when the estimate is delayed relative to the reference.
    """
    est, ref = _arr(estimate), _arr(reference)
    n = min(len(est), len(ref))
    if n == 0:
        raise InputTooShortError("cannot align empty signals")
    xc = correlate(est, ref, mode="full", method="fft")
    lags = np.arange(-len(ref) + 1, len(est))
    if max_lag is not None:
        keep = np.abs(lags) <= max_lag
        xc, lags = xc[keep], lags[keep]
    lag = int(lags[np.argmax(np.abs(xc))])
    if lag >= 0:
        e, r = est[lag:], ref
    else:
        e, r = est, ref[-lag:]
    m = min(len(e), len(r))
    return e[:m], r[:m], lag


# STOI constants (10 kHz, 256-sample frames, 15 third-octave bands from 150 Hz)
STOI_FS = 10000
_FRAME = 256
_NFFT = 512
_HOP = 128
_BANDS = 15
_MIN_FREQ = 150.0
_SEGMENT = 30
_BETA_DB = -15.0
_DYN_RANGE = 40.0
_EPS = np.finfo(np.float64).eps


def _hann(n: int) -> np.ndarray:
    # Hann without the two zero endpoints
    return np.hanning(n + 2)[1:-1]


def _third_octave_matrix(fs: int, nfft: int, num_bands: int, min_freq: float) -> np.ndarray:
    freqs = np.arange(nfft // 2 + 1) * fs / nfft
    k = np.arange(num_bands, dtype=np.float64)
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((num_bands, freqs.size))
    for b in range(num_bands):
        i_lo = int(np.argmin(np.abs(freqs - lo[b])))
        i_hi = int(np.argmin(np.abs(freqs - hi[b])))
        obm[b, i_lo:i_hi] = 1.0
    return obm


_OBM = _third_octave_matrix(STOI_FS, _NFFT, _BANDS, _MIN_FREQ)


def _frames(x: np.ndarray, win: np.ndarray) -> np.ndarray:
    starts = np.arange(0, len(x) - _FRAME + 1, _HOP)
    idx = starts[:, None] + np.arange(_FRAME)[None, :]
    return x[idx] * win


def _drop_silence(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop frames where the clean signal is more than 40 dB below its loudest frame."""
    win = _hann(_FRAME)
    fx, fy = _frames(x, win), _frames(y, win)
    level = 20.0 * np.log10(np.linalg.norm(fx, axis=1) + _EPS)
    keep = level > np.max(level) - _DYN_RANGE
    fx, fy = fx[keep], fy[keep]
    n = (len(fx) - 1) * _HOP + _FRAME if len(fx) else 0
    xs, ys = np.zeros(n), np.zeros(n)
    for t in range(len(fx)):
        xs[t * _HOP:t * _HOP + _FRAME] += fx[t]
        ys[t * _HOP:t * _HOP + _FRAME] += fy[t]
    return xs, ys


def _band_envelopes(x: np.ndarray) -> np.ndarray:
    spec = np.fft.rfft(_frames(x, _hann(_FRAME)), n=_NFFT, axis=1)
    return np.sqrt(_OBM @ (np.abs(spec) ** 2).T)  # (bands, frames)


def _resample(x: np.ndarray, fs: int) -> np.ndarray:
    if fs == STOI_FS:
        return x
    g = gcd(int(fs), STOI_FS)
    return resample_poly(x, STOI_FS // g, int(fs) // g)


def stoi(estimate, reference, fs: int | None = None) -> float:
    """Short-time objective intelligibility of ``estimate`` against ``reference``.

    Both are resampled to 10 kHz, silent frames of the reference are removed,
    and the clipped, normalised short-time band envelopes (384 ms segments)
    are correlated and averaged.
    """
    if fs is None:
        fs = getattr(reference, "sample_rate", None) or getattr(estimate, "sample_rate", 8000)
    est, ref = _arr(estimate), _arr(reference)
    if est.shape != ref.shape:
        raise ShapeMismatchError(f"length mismatch: {est.shape} vs {ref.shape}")
    x, y = _resample(ref, fs), _resample(est, fs)
    if len(x) < _FRAME:
        raise InputTooShortError("signal is shorter than one STOI frame")
    x, y = _drop_silence(x, y)
    if len(x) < _FRAME:
        raise InputTooShortError("no voiced frames in the reference")
    X, Y = _band_envelopes(x), _band_envelopes(y)
    n_frames = X.shape[1]
    if n_frames < _SEGMENT:
        raise InputTooShortError(
            f"{n_frames} voiced frames; STOI needs at least {_SEGMENT}"
        )
    clip = 1.0 + 10.0 ** (-_BETA_DB / 20.0)
    total = 0.0
    count = 0
    for m in range(_SEGMENT, n_frames + 1):
        xs = X[:, m - _SEGMENT:m]
        ys = Y[:, m - _SEGMENT:m]
        gain = np.linalg.norm(xs, axis=1, keepdims=True) / (np.linalg.norm(ys, axis=1, keepdims=True) + _EPS)
        yp = np.minimum(ys * gain, clip * xs)
        xc = xs - xs.mean(axis=1, keepdims=True)
        yc = yp - yp.mean(axis=1, keepdims=True)
        xc /= np.linalg.norm(xc, axis=1, keepdims=True) + _EPS
        yc /= np.linalg.norm(yc, axis=1, keepdims=True) + _EPS
        total += float(np.sum(xc * yc))
        count += xs.shape[0]
    return float(np.clip(total / count, 0.0, 1.0))


_PESQ_PATTERNS = (
    re.compile(r"MOS-LQO\)?[\s:=]*[-+\d.eE]+\s+([-+]?\d+\.\d+)"),
    re.compile(r"(?:PESQ|MOS)[^\n\d+-]*([-+]?\d+\.\d+)"),
    re.compile(r"^\s*([-+]?\d+(?:\.\d+)?)\s*$", re.M),
)


def parse_pesq_output(text: str) -> float | None:
    for pat in _PESQ_PATTERNS:
        hits = pat.findall(text)
        if hits:
            return float(hits[-1])
    return None


def pesq_external(estimate, reference, tool_path: str | None = None,
                  fs: int | None = None, timeout: float = 60.0) -> float | None:
    """Score with an external PESQ program, or return ``None``.

    The tool is called as ``<tool> +<fs> <reference.wav> <degraded.wav>``;
    ``tool_path`` may carry extra leading arguments. It defaults to the
    ``ADHOCSEP_PESQ`` environment variable. A missing tool, a crash or
    unparsable output all give ``None`` (the last two with a warning).
    """
    from .fileio import write_wav

    tool_path = tool_path or os.environ.get(PESQ_ENV)
    if not tool_path:
        return None
    argv = shlex.split(tool_path)
    if not argv or not (Path(argv[0]).exists() or _on_path(argv[0])):
        return None
    if fs is None:
        fs = getattr(reference, "sample_rate", None) or getattr(estimate, "sample_rate", 8000)
    est, ref = _arr(estimate), _arr(reference)
    with tempfile.TemporaryDirectory() as tmp:
        ref_path, deg_path = Path(tmp, "ref.wav"), Path(tmp, "deg.wav")
        write_wav(ref_path, Waveform(ref, fs), dtype="int16")
        write_wav(deg_path, Waveform(est, fs), dtype="int16")
        try:
            proc = subprocess.run(argv + [f"+{fs}", str(ref_path), str(deg_path)],
                                  capture_output=True, text=True, timeout=timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            warnings.warn(f"PESQ tool failed to run: {exc}")
            return None
    if proc.returncode != 0:
        warnings.warn(f"PESQ tool exited with status {proc.returncode}: {proc.stderr.strip()[:200]}")
        return None
    value = parse_pesq_output(proc.stdout)
    if value is None:
        warnings.warn("could not parse a PESQ score from the tool output")
    return value


def _on_path(name: str) -> bool:
    from shutil import which
    return which(name) is not None


@dataclass
class MetricReport:
    si_sdr_db: float
    sdr_db: float
    stoi: float
    pesq: float | None = None

    def __post_init__(self):
        self.si_sdr_db = float(np.clip(self.si_sdr_db, -DB_CAP, DB_CAP))
        self.sdr_db = float(np.clip(self.sdr_db, -DB_CAP, DB_CAP))
        self.stoi = float(np.clip(self.stoi, 0.0, 1.0))

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["pesq"] is None:
            d.pop("pesq")
        return d


METRICS = ("si_sdr", "sdr", "stoi", "pesq")


def evaluate(estimate, reference, fs: int | None = None, metrics=("si_sdr", "sdr", "stoi"),
             max_lag: int | None = None, pesq_tool: str | None = None) -> MetricReport:
    """Align, then score ``estimate`` against ``reference``."""
    if fs is None:
        fs = getattr(reference, "sample_rate", None) or getattr(estimate, "sample_rate", 8000)
    e, r, _ = align(estimate, reference, max_lag)
    nan = float("nan")
    return MetricReport(
        si_sdr_db=si_sdr(e, r) if "si_sdr" in metrics else nan,
        sdr_db=sd_sdr(e, r) if "sdr" in metrics else nan,
        stoi=stoi(e, r, fs) if "stoi" in metrics else nan,
        pesq=pesq_external(e, r, pesq_tool, fs) if "pesq" in metrics else None,
    )
