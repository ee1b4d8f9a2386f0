"""WAV and array dump I/O.

Array dumps (spectrograms, masks, covariances, filters) come in two forms:

* ``.json``: ``{"kind": ..., "shape": [...], "real": [...], "imag": [...]}``
  with the data flattened in C order; ``imag`` is omitted for real arrays and
  extra scalar metadata sits under ``"meta"``.
* ``.npy``: the NumPy array format, always written little-endian
  (``<f8`` or ``<c16``).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import Waveform

_INT16_SCALE = 32768.0


def read_wav(path) -> Waveform:
    """Read a mono (or first channel of a multichannel) WAV as float in [-1, 1)."""
    fs, data = wavfile.read(str(path))
    if data.ndim > 1:
        data = data[:, 0]
    if data.dtype == np.int16:
        x = data.astype(np.float64) / _INT16_SCALE
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2.0 ** 31
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:
        x = data.astype(np.float64)
    return Waveform(x, int(fs))


def write_wav(path, wave: Waveform, dtype: str = "float32", normalize: bool = False):
    x = np.asarray(wave.samples, dtype=np.float64)
    if normalize:
        peak = np.max(np.abs(x)) if x.size else 0.0
        if peak > 0:
            x = 0.99 * x / peak
    if dtype == "int16":
        data = np.clip(np.round(x * _INT16_SCALE), -32768, 32767).astype(np.int16)
    elif dtype == "float32":
        data = x.astype(np.float32)
    else:
        raise ValueError(f"unsupported WAV dtype {dtype!r}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), wave.sample_rate, data)


def dump_array(path, arr, kind: str = "array", meta: dict | None = None):
    path = Path(path)
    arr = np.asarray(arr)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".npy":
        dt = "<c16" if np.iscomplexobj(arr) else "<f8"
        np.save(path, arr.astype(dt))
        return
    doc = {"kind": kind, "shape": list(arr.shape)}
    flat = arr.reshape(-1)
    doc["real"] = np.real(flat).astype(float).tolist()
    if np.iscomplexobj(arr):
        doc["imag"] = np.imag(flat).astype(float).tolist()
    if meta:
        doc["meta"] = meta
    path.write_text(json.dumps(doc))


def load_array(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    doc = json.loads(path.read_text())
    real = np.asarray(doc["real"], dtype=np.float64)
    if "imag" in doc:
        real = real + 1j * np.asarray(doc["imag"], dtype=np.float64)
    return real.reshape(doc["shape"])


def dump_masks(path, masks):
    """Per-channel masks as one ``(W, T, F)`` array."""
    dump_array(path, np.stack([getattr(m, "values", m) for m in masks]), kind="masks")


def load_masks(path):
    from .dsp import Mask
    arr = load_array(path)
    if arr.ndim == 2:
        arr = arr[None]
    return [Mask(a) for a in arr]
