import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adhocsep.dsp import Waveform
from adhocsep.errors import GeometryError, SamplingError, SilentInputError
from adhocsep.room import (
    SOUND_SPEED,
    Rir,
    RoomSpec,
    SamplerBounds,
    Scenario,
    estimate_t60,
    mix_scenario,
    reverb_t60,
    render_images,
    rir_length,
    sample_scenario,
    scale_to_snr,
    schroeder_curve,
    simulate_rir,
)

ROOM = RoomSpec(7.0, 9.0, 2.2, t60=0.3)


def test_sampling_is_deterministic():
    a, b = sample_scenario(5), sample_scenario(5)
    assert a.to_dict() == b.to_dict()
    assert sample_scenario(6).to_dict() != a.to_dict()


@given(st.integers(0, 2**31 - 1))
def test_sampled_geometry_satisfies_constraints(seed):
    s = sample_scenario(seed, num_mics=8)
    r = s.room
    assert 5 <= r.length <= 15 and 5 <= r.width <= 25 and 1 <= r.height <= 2.5
    assert 0.05 <= r.t60 <= 0.8
    assert 0 <= s.mix_snr_db <= 5
    s.validate()
    for p in (s.target_pos, s.interf_pos):
        assert np.all(p >= 0.2) and np.all(p <= r.dims - 0.2)
        assert np.all(np.linalg.norm(s.mic_pos - p, axis=1) >= 0.3)


def test_sampling_error_when_unsatisfiable():
    tight = SamplerBounds(length=(1.0, 1.0), width=(1.0, 1.0), height=(1.0, 1.0),
                          mic_clearance=5.0, max_retries=20)
    with pytest.raises(SamplingError):
        sample_scenario(0, tight)


def test_scenario_json_round_trip(tmp_path):
    s = sample_scenario(42, num_mics=3)
    s.to_json(tmp_path / "s.json")
    back = Scenario.from_json(tmp_path / "s.json")
    assert back.to_dict() == s.to_dict()
    doc = json.loads((tmp_path / "s.json").read_text())
    assert {"room", "target_pos", "interf_pos", "mic_pos", "t60", "mix_snr_db", "seed"} <= set(doc)


def test_validate_rejects_bad_geometry():
    s = sample_scenario(1, num_mics=2)
    bad = Scenario(s.room, [0.1, 1.0, 0.5], s.interf_pos, s.mic_pos, 1.0, 0)
    with pytest.raises(GeometryError):
        bad.validate()
    close = Scenario(s.room, s.target_pos, s.interf_pos, [s.target_pos + 0.1], 1.0, 0)
    with pytest.raises(GeometryError):
        close.validate()


def test_eyring_coefficient_matches_formula():
    V, S = ROOM.volume, ROOM.surface
    alpha = 1 - ROOM.reflection_coefficient() ** 2
    t60 = 24 * math.log(10) * V / (-SOUND_SPEED * S * math.log(1 - alpha))
    assert t60 == pytest.approx(ROOM.t60, rel=1e-12)


def test_positions_outside_room_raise():
    with pytest.raises(GeometryError):
        simulate_rir(ROOM, [8.0, 1.0, 1.0], [1.0, 1.0, 1.0])
    with pytest.raises(GeometryError):
        simulate_rir(ROOM, [1.0, 1.0, 1.0], [1.0, 1.0, 2.5])


def test_near_anechoic_single_dominant_tap():
    room = RoomSpec(7.0, 9.0, 2.2, t60=0.01)
    src, mic = np.array([2.0, 3.0, 1.1]), np.array([4.3, 5.1, 0.9])
    rir = simulate_rir(room, src, mic)
    d = np.linalg.norm(src - mic)
    expect = round(d / SOUND_SPEED * 8000)
    assert abs(int(np.argmax(np.abs(rir.taps))) - expect) <= 1
    assert abs(rir.direct_path_index - expect) <= 1


def test_direct_amplitude_follows_inverse_distance():
    # integer-sample delays keep the two direct kernels identical up to scale
    step = SOUND_SPEED / 8000
    src = np.array([1.0, 4.0, 1.1])
    d1, d2 = 20 * step, 40 * step
    r1 = simulate_rir(ROOM, src, src + [d1, 0, 0])
    r2 = simulate_rir(ROOM, src, src + [d2, 0, 0])
    a1, a2 = np.max(np.abs(r1.direct_taps)), np.max(np.abs(r2.direct_taps))
    assert a1 / a2 == pytest.approx(2.0, rel=1e-9)
    # raw (unfiltered) direct tap is 1 / (4 pi d)
    raw = simulate_rir(ROOM, src, src + [d1, 0, 0], highpass=False)
    assert raw.direct_taps[20] == pytest.approx(1 / (4 * math.pi * d1), rel=1e-12)


def test_rir_is_causal_and_long_enough():
    src, mic = np.array([1.5, 2.0, 1.0]), np.array([5.0, 7.5, 1.6])
    rir = simulate_rir(ROOM, src, mic)
    assert not np.any(rir.taps[:rir.direct_path_index])
    assert len(rir.taps) >= ROOM.t60 * 8000
    assert len(rir.taps) == rir_length(ROOM, np.linalg.norm(src - mic) / SOUND_SPEED * 8000, 8000)


def test_schroeder_oracle_recovers_synthetic_decay():
    # exponentially decaying noise with a known T60
    rng = np.random.default_rng(0)
    fs, t60 = 8000, 0.4
    t = np.arange(int(0.8 * fs)) / fs
    h = rng.standard_normal(t.size) * 10 ** (-3 * t / t60)
    assert estimate_t60(h, fs) == pytest.approx(t60, rel=0.05)


def test_schroeder_curve_monotone():
    rir = simulate_rir(ROOM, [1.0, 1.0, 1.0], [3.0, 6.0, 1.5])
    edc = schroeder_curve(rir.taps)
    assert edc[0] == 0.0
    assert np.all(np.diff(edc[np.isfinite(edc)]) <= 1e-12)


@pytest.mark.parametrize("t60", [0.15, 0.3, 0.6])
def test_rir_decay_matches_requested_t60(t60):
    room = RoomSpec(8.0, 11.0, 2.0, t60=t60)
    rir = simulate_rir(room, [2.0, 3.0, 1.2], [5.5, 8.0, 0.8])
    assert reverb_t60(rir) == pytest.approx(t60, rel=0.2)


def test_geometric_attenuation_available():
    rir = simulate_rir(ROOM, [2.0, 3.0, 1.2], [5.5, 7.0, 0.8], attenuation="geometric")
    assert np.all(np.isfinite(rir.taps))
    with pytest.raises(ValueError):
        simulate_rir(ROOM, [2.0, 3.0, 1.2], [5.5, 7.0, 0.8], attenuation="other")


def test_render_identity_cases():
    x = Waveform(np.random.default_rng(1).standard_normal(300))
    imp = np.zeros(10)
    imp[0] = 1.0
    rev, direct = render_images(x, Rir(imp, 8000, 0))
    np.testing.assert_allclose(rev.samples[:300], x.samples, atol=1e-12)
    np.testing.assert_allclose(direct.samples[:300], x.samples, atol=1e-12)
    rir = simulate_rir(ROOM, [1.0, 1.0, 1.0], [3.0, 3.0, 1.5])
    d = np.zeros(50)
    d[0] = 1.0
    rev, _ = render_images(Waveform(d), rir)
    np.testing.assert_allclose(rev.samples[:len(rir.taps)], rir.taps, atol=1e-12)
    with pytest.raises(ValueError):
        render_images(Waveform(d, 16000), rir)


def test_direct_image_energy_not_above_reverberant(small_record):
    for t, d in zip(small_record.target_image, small_record.target_direct):
        assert d.energy() <= t.energy()


def test_mixture_is_sum_of_images(small_record):
    for y, t, i in zip(small_record.mixture, small_record.target_image, small_record.interf_image):
        np.testing.assert_allclose(y.samples, t.samples + i.samples, atol=1e-12, rtol=0)


def test_dry_snr_is_exact(small_record):
    t, i = small_record.target_dry, small_record.interf_dry
    snr = 10 * np.log10(t.energy() / i.energy())
    assert snr == pytest.approx(small_record.scenario.mix_snr_db, abs=0.01)


def test_zero_snr_equalises_energy():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal(100), 3 * rng.standard_normal(100)
    b2 = scale_to_snr(a, b, 0.0)
    assert np.dot(b2, b2) == pytest.approx(np.dot(a, a), rel=1e-12)


def test_silent_input_rejected():
    s = sample_scenario(3, num_mics=1)
    with pytest.raises(SilentInputError):
        mix_scenario(Waveform(np.zeros(400)), Waveform(np.ones(400)), s)


def test_mixing_is_deterministic():
    s = sample_scenario(9, num_mics=2)
    x = Waveform(np.random.default_rng(0).standard_normal(800))
    y = Waveform(np.random.default_rng(1).standard_normal(800))
    a, b = mix_scenario(x, y, s), mix_scenario(x, y, s)
    for u, v in zip(a.mixture, b.mixture):
        assert np.array_equal(u.samples, v.samples)
