import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from adhocsep.dsp import Waveform
from adhocsep.errors import OutOfRangeError, ShapeMismatchError, SilentInputError
from adhocsep.room import MixtureRecord, RoomSpec, Scenario
from adhocsep.weighting import (
    ChannelWeights,
    FileEstimator,
    OracleEstimator,
    noisy_oracle_weights,
    oracle_weights,
    utterance_level_snr,
)

sig = arrays(np.float64, 32, elements=st.floats(-5, 5))


def test_examples():
    x = Waveform(np.array([1.0, -2.0, 0.0]))
    z = Waveform(np.zeros(3))
    assert utterance_level_snr(x, z) == 1.0
    assert utterance_level_snr(z, x) == 0.0
    a = Waveform(np.array([1.0, -1.0, 1.0]))
    i = Waveform(np.array([0.0, 0.5, -0.5]))
    assert utterance_level_snr(a, i) == 0.75


def test_errors():
    z = Waveform(np.zeros(4))
    with pytest.raises(SilentInputError):
        utterance_level_snr(z, z)
    with pytest.raises(ShapeMismatchError):
        utterance_level_snr(Waveform(np.ones(3)), Waveform(np.ones(4)))


@given(sig, sig)
def test_matches_scalar_oracle(a, i):
    if not (np.any(a) or np.any(i)):
        return
    assert utterance_level_snr(a, i) == pytest.approx(oracles.l1_ratio(a, i), rel=1e-12)


@given(sig, sig, st.floats(1.01, 100))
def test_monotone_in_interference(a, i, alpha):
    if not (np.any(a) and np.any(i)):
        return
    lo, hi = utterance_level_snr(a, alpha * i), utterance_level_snr(a, i)
    assert lo <= hi
    sa, si = np.sum(np.abs(a)), np.sum(np.abs(i))
    if si > 1e-12 * sa:
        # strict once the interference is resolvable next to the target in float64
        assert lo < hi


@given(sig, sig, st.floats(1e-3, 1e3))
def test_scale_covariance_and_symmetry(a, i, k):
    if not (np.any(a) or np.any(i)):
        return
    v = utterance_level_snr(a, i)
    assert utterance_level_snr(k * a, k * i) == pytest.approx(v, rel=1e-12)
    assert v + utterance_level_snr(i, a) == pytest.approx(1.0, abs=1e-12)


def _anechoic_record(mics, target, interf, n=400):
    """Pure-delay 1/r rendering, no reflections."""
    rng = np.random.default_rng(0)
    s_t, s_i = rng.standard_normal(n), rng.standard_normal(n)
    room = RoomSpec(10.0, 10.0, 2.5, t60=0.1)
    td, idr = [], []
    for m in mics:
        dt = np.linalg.norm(np.subtract(m, target))
        di = np.linalg.norm(np.subtract(m, interf))
        td.append(Waveform(s_t / (4 * np.pi * dt)))
        idr.append(Waveform(s_i / (4 * np.pi * di)))
    mix = [Waveform(a.samples + b.samples) for a, b in zip(td, idr)]
    scen = Scenario(room, target, interf, mics, 0.0, 0)
    return MixtureRecord(scen, mix, td, idr, td, idr), s_t, s_i


def test_anechoic_nearest_mic_wins():
    target, interf = [2.0, 5.0, 1.2], [8.0, 5.0, 1.2]
    mics = [[3.0, 5.0, 1.0], [5.0, 5.0, 1.0], [7.0, 5.0, 1.0]]
    rec, s_t, s_i = _anechoic_record(mics, target, interf)
    q = oracle_weights(rec).q
    # by hand: q_j = A_t / (A_t + A_i) with A = sum|s| / (4 pi d)
    at, ai = np.sum(np.abs(s_t)), np.sum(np.abs(s_i))
    for j, m in enumerate(mics):
        dt, di = np.linalg.norm(np.subtract(m, target)), np.linalg.norm(np.subtract(m, interf))
        want = (at / dt) / (at / dt + ai / di)
        assert q[j] == pytest.approx(want, rel=1e-12)
    assert int(np.argmax(q)) == 0


def test_muted_interference_gives_one(small_record):
    rec = small_record
    muted = MixtureRecord(rec.scenario, rec.mixture, rec.target_image, rec.interf_image,
                          rec.target_direct,
                          [Waveform(np.zeros_like(w.samples)) for w in rec.interf_direct])
    np.testing.assert_array_equal(oracle_weights(muted).q, 1.0)


def test_oracle_shape_and_modes(small_record):
    for mode in ("direct_only", "reverberant"):
        q = oracle_weights(small_record, mode).q
        assert q.shape == (small_record.num_channels,)
        assert np.all((q >= 0) & (q <= 1))
    with pytest.raises(ValueError):
        oracle_weights(small_record, "early")


def test_sixteen_channels():
    from adhocsep.corpus import SyntheticCorpus
    from adhocsep.room import mix_scenario, sample_scenario
    c = SyntheticCorpus(0, duration=0.5)
    rec = mix_scenario(c.utterance(0).wave, c.utterance(1).wave, sample_scenario(2, num_mics=16))
    q = oracle_weights(rec).q
    assert q.shape == (16,) and np.all((q >= 0) & (q <= 1))


def test_missing_images_raise(small_record):
    rec = small_record
    broken = MixtureRecord(rec.scenario, rec.mixture, rec.target_image, rec.interf_image, [], [])
    with pytest.raises(ValueError):
        oracle_weights(broken)


def test_noisy_oracle(small_record):
    base = oracle_weights(small_record).q
    np.testing.assert_array_equal(noisy_oracle_weights(small_record, 0.0, 3).q, base)
    a = noisy_oracle_weights(small_record, 0.4, 7).q
    b = noisy_oracle_weights(small_record, 0.4, 7).q
    np.testing.assert_array_equal(a, b)
    assert np.all((a >= 0) & (a <= 1))
    with pytest.raises(ValueError):
        noisy_oracle_weights(small_record, -0.1, 0)


def test_estimators(small_record, tmp_path):
    q = OracleEstimator().estimate(small_record)
    p = tmp_path / "w.json"
    q.to_json(p)
    assert np.array_equal(FileEstimator(str(p)).estimate(small_record).q, q.q)
    keyed = tmp_path / "k.json"
    keyed.write_text('{"1": 0.2, "0": 0.9, "2": 0.1, "3": 0.4}')
    np.testing.assert_array_equal(ChannelWeights.from_json(keyed).q, [0.9, 0.2, 0.1, 0.4])
    short = tmp_path / "s.json"
    short.write_text("[0.5]")
    with pytest.raises(ShapeMismatchError):
        FileEstimator(str(short)).estimate(small_record)


def test_weight_range_enforced():
    with pytest.raises(OutOfRangeError):
        ChannelWeights([0.2, 1.1])
