"""Synthetic speech-like signals so the pipeline runs without licensed audio.

Each utterance is a sequence of syllables separated by short pauses. A
syllable is a harmonic series on a drifting f0, shaped by a random vowel
formant envelope and a raised-cosine amplitude contour; some syllables get a
noise burst onset standing in for a fricative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .dsp import Waveform

F0_RANGES = {"F": (165.0, 255.0), "M": (85.0, 150.0)}

# rough (F1, F2, F3) for a handful of vowels
_VOWELS = np.array([
    [730, 1090, 2440], [270, 2290, 3010], [300, 870, 2240],
    [530, 1840, 2480], [570, 840, 2410], [660, 1720, 2410], [440, 1020, 2240],
], dtype=np.float64)


@dataclass
class Utterance:
    wave: Waveform
    gender: str
    f0: float
    seed: int


def _formant_gain(freqs, formants, bw=(90.0, 110.0, 170.0)):
    g = np.zeros_like(freqs)
    for f, b in zip(formants, bw):
        g += 1.0 / (1.0 + ((freqs - f) / b) ** 2)
    return g + 0.02


def speech_like(duration: float = 3.0, fs: int = 8000, gender: str | None = None,
                seed: int = 0) -> Utterance:
    rng = np.random.default_rng(seed)
    if gender is None:
        gender = "F" if rng.random() < 0.5 else "M"
    if gender not in F0_RANGES:
        raise ValueError(f"gender must be 'F' or 'M', got {gender!r}")
    f0_base = rng.uniform(*F0_RANGES[gender])
    n = int(round(duration * fs))
    out = np.zeros(n)
    pos = int(rng.uniform(0.05, 0.2) * fs)
    while pos < n:
        syl = int(rng.uniform(0.12, 0.3) * fs)
        seg = min(syl, n - pos)
        if seg < 32:
            break
        t = np.arange(seg) / fs
        # f0 glides up to +-15% across the syllable, with light vibrato
        f0 = f0_base * (1.0 + rng.uniform(-0.15, 0.15) * t / max(t[-1], 1e-9))
        f0 = f0 * (1.0 + 0.01 * np.sin(2 * np.pi * 5.0 * t))
        phase = 2 * np.pi * np.cumsum(f0) / fs
        formants = _VOWELS[rng.integers(len(_VOWELS))] * rng.uniform(0.9, 1.1)
        k_max = int((0.45 * fs) // f0_base)
        voiced = np.zeros(seg)
        for k in range(1, k_max + 1):
            amp = _formant_gain(np.array([k * f0_base]), formants)[0] / np.sqrt(k)
            voiced += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
        env = np.sin(np.pi * np.arange(seg) / seg) ** 2
        syl_wave = voiced * env * rng.uniform(0.4, 1.0)
        if rng.random() < 0.35:
            burst = min(int(rng.uniform(0.03, 0.08) * fs), seg)
            noise = lfilter([1.0, -0.9], [1.0], rng.standard_normal(burst))
            syl_wave[:burst] += 0.3 * noise * np.hanning(burst) * np.std(voiced)
        out[pos:pos + seg] += syl_wave
        pos += seg
        if rng.random() < 0.3:
            pos += int(rng.uniform(0.1, 0.35) * fs)  # pause
        else:
            pos += int(rng.uniform(0.0, 0.04) * fs)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.5 / peak
    return Utterance(Waveform(out, fs), gender, float(f0_base), int(seed))


class SyntheticCorpus:
    """Deterministic source of utterances: index ``k`` of a seed always gives the same signal."""

    def __init__(self, seed: int = 0, duration: float = 3.0, fs: int = 8000):
        self.seed = int(seed)
        self.duration = duration
        self.fs = fs

    def utterance(self, k: int, gender: str | None = None) -> Utterance:
        sub = int(np.random.SeedSequence([self.seed, int(k)]).generate_state(1)[0])
        return speech_like(self.duration, self.fs, gender, sub)


def write_corpus(out_dir, count: int, seed: int = 0, duration: float = 3.0,
                 fs: int = 8000) -> list[str]:
    """Write ``count`` utterances as WAVs plus a ``corpus.json`` list with gender tags."""
    from .fileio import write_wav

    out_dir = Path(out_dir)
    corpus = SyntheticCorpus(seed, duration, fs)
    paths, entries = [], []
    for k in range(count):
        u = corpus.utterance(k)
        p = out_dir / f"utt{k:04d}_{u.gender}.wav"
        write_wav(p, u.wave)
        paths.append(str(p))
        entries.append({"path": str(p), "gender": u.gender})
    (out_dir / "corpus.json").write_text(json.dumps(entries, indent=1))
    return paths
