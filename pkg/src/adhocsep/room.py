"""Randomised shoebox scenarios and image-source rendering.

Geometry follows the ad-hoc array protocol: rooms 5-15 m long, 5-25 m wide
and 1-2.5 m high, two talkers kept 0.2 m from every wall and 0.3 m from
every microphone, reverberation time drawn from a Gaussian around 0.25 s,
and a dry-domain mixing SNR between 0 and 5 dB.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import butter, fftconvolve, lfilter

from .dsp import Waveform
from .errors import GeometryError, SamplingError, SilentInputError

SOUND_SPEED = 343.0
SINC_HALF_WIDTH = 16
HIGHPASS_HZ = 100.0


@dataclass(frozen=True)
class RoomSpec:
    length: float
    width: float
    height: float
    t60: float
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise GeometryError("room dimensions must be positive")
        if not 0 < self.t60 <= 0.8 + 1e-12:
            raise ValueError(f"t60 must lie in (0, 0.8] s, got {self.t60}")
        if self.sound_speed <= 0:
            raise ValueError("sound_speed must be positive")

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.length, self.width, self.height])

    @property
    def volume(self) -> float:
        return self.length * self.width * self.height

    @property
    def surface(self) -> float:
        l, w, h = self.length, self.width, self.height
        return 2.0 * (l * w + l * h + w * h)

    @property
    def mean_free_path(self) -> float:
        return 4.0 * self.volume / self.surface

    def reflection_coefficient(self) -> float:
        """Uniform wall pressure reflection coefficient from Eyring's formula.

        ``T60 = 24 ln(10) V / (-c S ln(1 - alpha))`` with ``beta = sqrt(1 - alpha)``.
        """
        k = 24.0 * math.log(10.0) / self.sound_speed
        return math.exp(-0.5 * k * self.volume / (self.surface * self.t60))

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p > margin) and np.all(p < self.dims - margin))


@dataclass(frozen=True)
class SamplerBounds:
    length: tuple[float, float] = (5.0, 15.0)
    width: tuple[float, float] = (5.0, 25.0)
    height: tuple[float, float] = (1.0, 2.5)
    t60_mean: float = 0.25
    t60_std: float = 0.1
    t60_range: tuple[float, float] = (0.05, 0.8)
    wall_clearance: float = 0.2
    mic_clearance: float = 0.3
    snr_range: tuple[float, float] = (0.0, 5.0)
    max_retries: int = 1000

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerBounds":
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)


@dataclass
class Scenario:
    room: RoomSpec
    target_pos: np.ndarray
    interf_pos: np.ndarray
    mic_pos: np.ndarray
    mix_snr_db: float
    seed: int

    def __post_init__(self):
        self.target_pos = np.asarray(self.target_pos, dtype=float).reshape(3)
        self.interf_pos = np.asarray(self.interf_pos, dtype=float).reshape(3)
        self.mic_pos = np.asarray(self.mic_pos, dtype=float).reshape(-1, 3)

    @property
    def num_mics(self) -> int:
        return self.mic_pos.shape[0]

    def validate(self, wall_clearance=0.2, mic_clearance=0.3, snr_range=(0.0, 5.0)):
        """Raise GeometryError unless every placement constraint holds."""
        room = self.room
        for name, p in (("target", self.target_pos), ("interferer", self.interf_pos)):
            if not room.contains(p, wall_clearance - 1e-12):
                raise GeometryError(f"{name} at {p} is closer than {wall_clearance} m to a wall")
            d = np.linalg.norm(self.mic_pos - p, axis=1)
            if np.any(d < mic_clearance - 1e-12):
                raise GeometryError(f"{name} is closer than {mic_clearance} m to a microphone")
        for j, m in enumerate(self.mic_pos):
            if not room.contains(m):
                raise GeometryError(f"microphone {j} at {m} is outside the room")
        lo, hi = snr_range
        if not lo <= self.mix_snr_db <= hi:
            raise GeometryError(f"mixing SNR {self.mix_snr_db} dB outside [{lo}, {hi}]")

    def to_dict(self) -> dict:
        return {
            "room": asdict(self.room),
            "target_pos": self.target_pos.tolist(),
            "interf_pos": self.interf_pos.tolist(),
            "mic_pos": self.mic_pos.tolist(),
            "t60": self.room.t60,
            "mix_snr_db": float(self.mix_snr_db),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            room=RoomSpec(**d["room"]),
            target_pos=d["target_pos"],
            interf_pos=d["interf_pos"],
            mic_pos=d["mic_pos"],
            mix_snr_db=d["mix_snr_db"],
            seed=d["seed"],
        )

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Rir:
    taps: np.ndarray
    sample_rate: int
    direct_path_index: int
    # the direct-path fractional-delay kernel alone, same length as taps
    direct_taps: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=float)
        if self.direct_taps is None:
            self.direct_taps = np.zeros_like(self.taps)
            self.direct_taps[self.direct_path_index] = self.taps[self.direct_path_index]
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("RIR contains non-finite taps")


@dataclass
class MixtureRecord:
    scenario: Scenario
    mixture: list[Waveform]
    target_image: list[Waveform]
    interf_image: list[Waveform]
    target_direct: list[Waveform]
    interf_direct: list[Waveform]
    target_dry: Waveform | None = None
    interf_dry: Waveform | None = None

    @property
    def num_channels(self) -> int:
        return len(self.mixture)

    @property
    def sample_rate(self) -> int:
        return self.mixture[0].sample_rate


def _truncated_normal(rng, mean, std, lo, hi, max_tries=10000):
    for _ in range(max_tries):
        v = rng.normal(mean, std)
        if lo <= v <= hi:
            return float(v)
    raise SamplingError(f"could not draw T60 from N({mean}, {std}) within [{lo}, {hi}]")


def sample_scenario(rng_seed: int, config: SamplerBounds | None = None,
                    num_mics: int = 16) -> Scenario:
    """Draw a random room, talker and microphone layout. Deterministic in the seed."""
    if num_mics < 1:
        raise ValueError("num_mics must be >= 1")
    cfg = config or SamplerBounds()
    rng = np.random.default_rng(rng_seed)
    dims = np.array([rng.uniform(*cfg.length), rng.uniform(*cfg.width), rng.uniform(*cfg.height)])
    t60 = _truncated_normal(rng, cfg.t60_mean, cfg.t60_std, *cfg.t60_range)
    room = RoomSpec(*dims, t60=t60)
    wc = cfg.wall_clearance
    if np.any(dims <= 2 * wc):
        raise SamplingError(f"room {dims} too small for {wc} m wall clearance")
    speakers = rng.uniform(wc, dims - wc, size=(2, 3))
    mics = np.empty((num_mics, 3))
    for j in range(num_mics):
        for _ in range(cfg.max_retries):
            m = rng.uniform(0.0, dims)
            if room.contains(m) and np.all(np.linalg.norm(speakers - m, axis=1) >= cfg.mic_clearance):
                mics[j] = m
                break
        else:
            raise SamplingError(
                f"could not place microphone {j} within {cfg.max_retries} retries"
            )
    snr = rng.uniform(*cfg.snr_range)
    return Scenario(room, speakers[0], speakers[1], mics, float(snr), int(rng_seed))


def _fractional_kernel(frac: np.ndarray, half_width: int) -> tuple[np.ndarray, np.ndarray]:
    """Hann-windowed sinc taps for delays ``n0 + frac``; offsets -L..L relative to n0."""
    offsets = np.arange(-half_width, half_width + 1)
    x = offsets[None, :] - frac[:, None]
    win = 0.5 * (1.0 + np.cos(np.pi * x / (half_width + 1)))
    return offsets, np.sinc(x) * win


def rir_length(room: RoomSpec, direct_delay: float, fs: int) -> int:
    """Direct-path delay plus ``ceil(1.1 T60 fs)`` of tail plus the kernel half-width."""
    return int(math.ceil(direct_delay)) + int(math.ceil(1.1 * room.t60 * fs)) + SINC_HALF_WIDTH + 1


def simulate_rir(room: RoomSpec, src, mic, fs: int = 8000,
                 half_width: int = SINC_HALF_WIDTH, n_taps: int | None = None,
                 highpass: bool = True, attenuation: str = "diffuse") -> Rir:
    """Image-source RIR of a shoebox room.

    Every mirror image contributes ``g / (4 pi r)`` at delay ``r / c``
    through a windowed-sinc fractional delay. With ``attenuation="diffuse"``
    the wall loss ``g = beta^max(1, r / l)`` uses the expected number of
    reflections along a path of length ``r`` (``l = 4V/S``), which makes the
    decay exponential at the Eyring T60 in any room shape. ``"geometric"``
    uses the image's exact reflection order ``beta^k``; in flat or elongated
    rooms the few-reflection grazing images then make the decay curve far
    longer than T60.

    Taps before the direct-path index are zeroed so the response is causal
    with respect to the first arrival, and a causal 100 Hz high-pass removes
    the DC build-up of the all-positive image sum.
    """
    if attenuation not in ("diffuse", "geometric"):
        raise ValueError(f"unknown attenuation {attenuation!r}")
    src = np.asarray(src, dtype=float)
    mic = np.asarray(mic, dtype=float)
    if not room.contains(src):
        raise GeometryError(f"source {src} is not strictly inside the room")
    if not room.contains(mic):
        raise GeometryError(f"microphone {mic} is not strictly inside the room")
    c = room.sound_speed
    dims = room.dims
    d_direct = float(np.linalg.norm(src - mic))
    tau_direct = d_direct / c * fs
    if n_taps is None:
        n_taps = rir_length(room, tau_direct, fs)
    beta = room.reflection_coefficient()
    log_beta = math.log(beta) if beta > 0 else -np.inf
    ell = room.mean_free_path

    max_dist = (n_taps + half_width) * c / fs
    orders = [int(math.ceil(max_dist / (2.0 * L))) + 1 for L in dims]
    rngs = [np.arange(-n, n + 1) for n in orders]
    grid = _PhaseGrid(n_taps, half_width)

    # image coordinate along an axis: (1 - 2p) s + 2 r L, reflection count |r - p| + |r|
    axis_terms = []
    for ax in range(3):
        r = rngs[ax]
        per_parity = []
        for p in (0, 1):
            pos = (1 - 2 * p) * src[ax] + 2 * r * dims[ax] - mic[ax]
            count = np.abs(r - p) + np.abs(r)
            keep = np.abs(pos) <= max_dist
            per_parity.append((pos[keep], count[keep]))
        axis_terms.append(per_parity)

    if beta > 0:
        for px in (0, 1):
            dx, kx = axis_terms[0][px]
            for py in (0, 1):
                dy, ky = axis_terms[1][py]
                dxy2 = dx[:, None] ** 2 + dy[None, :] ** 2
                kxy = kx[:, None] + ky[None, :]
                sel = dxy2 <= max_dist ** 2
                dxy2 = dxy2[sel]
                kxy = kxy[sel]
                for pz in (0, 1):
                    dz, kz = axis_terms[2][pz]
                    d2 = dxy2[:, None] + dz[None, :] ** 2
                    k = kxy[:, None] + kz[None, :]
                    ok = (d2 <= max_dist ** 2) & (k > 0)
                    dist = np.sqrt(d2[ok])
                    if attenuation == "diffuse":
                        order = np.maximum(1.0, dist / ell)
                    else:
                        order = k[ok]
                    amp = np.exp(order * log_beta) / (4.0 * np.pi * dist)
                    grid.add(dist / c * fs, amp)

    direct_idx = int(math.floor(tau_direct))
    direct = _exact_kernel(n_taps, tau_direct, 1.0 / (4.0 * np.pi * d_direct), half_width)
    taps = grid.render() + direct
    taps[:direct_idx] = 0.0
    direct[:direct_idx] = 0.0
    if highpass:
        # all images share the sign of beta and pile up coherently at DC
        b, a = butter(2, HIGHPASS_HZ / (fs / 2.0), btype="high")
        taps[direct_idx:] = lfilter(b, a, taps[direct_idx:])
        direct[direct_idx:] = lfilter(b, a, direct[direct_idx:])
    return Rir(taps, fs, direct_idx, direct)


FRACTION_STEPS = 128


class _PhaseGrid:
    """Fractional-delay accumulator.

    Image delays are quantised to 1/FRACTION_STEPS of a sample and binned by
    (integer delay, fractional phase); each phase then shares one windowed-sinc
    kernel, so rendering costs one bincount plus a small polyphase product.
    """

    def __init__(self, n_taps: int, half_width: int, steps: int = FRACTION_STEPS):
        self.n_taps = n_taps
        self.half_width = half_width
        self.steps = steps
        self.acc = np.zeros((n_taps + 2 * half_width + 2) * steps)

    def add(self, delays: np.ndarray, amps: np.ndarray):
        if delays.size == 0:
            return
        q = np.rint(delays * self.steps).astype(np.int64)
        ok = q < self.acc.size
        self.acc += np.bincount(q[ok], weights=amps[ok], minlength=self.acc.size)

    def render(self) -> np.ndarray:
        L = self.half_width
        acc = self.acc.reshape(-1, self.steps)
        offsets, kern = _fractional_kernel(np.arange(self.steps) / self.steps, L)
        out = np.zeros(acc.shape[0] + 2 * L)
        for i, off in enumerate(offsets):
            out[L + off:L + off + acc.shape[0]] += acc @ kern[:, i]
        return out[L:L + self.n_taps]


def _exact_kernel(n_taps: int, delay: float, amp: float, half_width: int) -> np.ndarray:
    """One windowed-sinc arrival at an unquantised delay."""
    out = np.zeros(n_taps)
    n0 = int(math.floor(delay))
    offsets, kern = _fractional_kernel(np.array([delay - n0]), half_width)
    idx = n0 + offsets
    ok = (idx >= 0) & (idx < n_taps)
    out[idx[ok]] = amp * kern[0, ok]
    return out


def schroeder_curve(taps) -> np.ndarray:
    """Backward-integrated energy decay in dB, normalised to 0 dB at t = 0."""
    e = np.asarray(taps, dtype=float) ** 2
    edc = np.cumsum(e[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(edc / edc[0])


DECAY_FIT_DB = (-10.0, -40.0)


def estimate_t60(taps, fs: int, start_db: float = DECAY_FIT_DB[0],
                 stop_db: float = DECAY_FIT_DB[1]) -> float:
    """T60 extrapolated from a linear fit of the Schroeder curve between two levels.

    The default -10..-40 dB range (a 30 dB span starting below the sparse
    early reflections) is the most position-stable fit. Pass the taps after
    the direct path (see :func:`reverb_t60`) to measure the reverberant decay
    rather than the direct-to-reverberant step.
    """
    edc = schroeder_curve(taps)
    i0 = int(np.argmax(edc <= start_db))
    i1 = int(np.argmax(edc <= stop_db))
    if i1 <= i0 + 1:
        raise ValueError("decay curve too short to fit")
    t = np.arange(i0, i1) / fs
    slope = np.polyfit(t, edc[i0:i1], 1)[0]
    return float(-60.0 / slope)


def reverb_t60(rir: Rir) -> float:
    """Schroeder T60 of the response after the direct-path kernel."""
    return estimate_t60(rir.taps[rir.direct_path_index + SINC_HALF_WIDTH + 1:], rir.sample_rate)


def render_images(dry: Waveform, rir: Rir) -> tuple[Waveform, Waveform]:
    """Convolve a dry source with the full RIR and with its direct-path part only."""
    if dry.sample_rate != rir.sample_rate:
        raise ValueError(
            f"sample-rate mismatch: dry {dry.sample_rate} Hz vs RIR {rir.sample_rate} Hz"
        )
    reverb = fftconvolve(dry.samples, rir.taps)
    direct = fftconvolve(dry.samples, rir.direct_taps)
    return Waveform(reverb, dry.sample_rate), Waveform(direct, dry.sample_rate)


def scale_to_snr(target: np.ndarray, interf: np.ndarray, snr_db: float) -> np.ndarray:
    """Rescale ``interf`` so that 10 log10(E_target / E_interf) equals ``snr_db``."""
    et = float(np.dot(target, target))
    ei = float(np.dot(interf, interf))
    if et <= 0 or ei <= 0:
        raise SilentInputError("both dry signals must have nonzero energy")
    return interf * math.sqrt(et / (ei * 10.0 ** (snr_db / 10.0)))


def _pad_to(x: np.ndarray, n: int) -> np.ndarray:
    return np.pad(x, (0, n - len(x)))


def mix_scenario(target_dry: Waveform, interf_dry: Waveform, scenario: Scenario,
                 keep_dry: bool = True) -> MixtureRecord:
    """Render both talkers through every microphone's RIRs and sum them.

    The dry signals are cut to the shorter length, the interferer is scaled
    to the scenario's dry-domain SNR, and all channels are zero-padded to a
    common length.
    """
    if target_dry.sample_rate != interf_dry.sample_rate:
        raise ValueError("dry signals use different sample rates")
    fs = target_dry.sample_rate
    n = min(len(target_dry), len(interf_dry))
    t = target_dry.samples[:n]
    i = interf_dry.samples[:n]
    if not np.any(t) or not np.any(i):
        raise SilentInputError("both dry signals must be nonsilent")
    i = scale_to_snr(t, i, scenario.mix_snr_db)
    t_wave, i_wave = Waveform(t, fs), Waveform(i, fs)

    parts = {"ti": [], "ii": [], "td": [], "id": []}
    for mic in scenario.mic_pos:
        for src, wave, keys in ((scenario.target_pos, t_wave, ("ti", "td")),
                                (scenario.interf_pos, i_wave, ("ii", "id"))):
            rir = simulate_rir(scenario.room, src, mic, fs)
            rev, direct = render_images(wave, rir)
            parts[keys[0]].append(rev.samples)
            parts[keys[1]].append(direct.samples)
    total = max(len(x) for group in parts.values() for x in group)
    waves = {k: [Waveform(_pad_to(x, total), fs) for x in v] for k, v in parts.items()}
    mixture = [Waveform(a.samples + b.samples, fs) for a, b in zip(waves["ti"], waves["ii"])]
    return MixtureRecord(
        scenario=scenario,
        mixture=mixture,
        target_image=waves["ti"],
        interf_image=waves["ii"],
        target_direct=waves["td"],
        interf_direct=waves["id"],
        target_dry=t_wave if keep_dry else None,
        interf_dry=i_wave if keep_dry else None,
    )
