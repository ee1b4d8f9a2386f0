"""Target-speaker extraction with ad-hoc microphone arrays.

Channel weighting by utterance-level SNR, channel selection, and mask-based
MVDR on the selected channels, plus an image-source room simulator and an
oracle-estimator experiment harness.
"""

from .dsp import FrameParams, LossConfig, Mask, Spectrogram, Waveform, istft, stft
from .room import MixtureRecord, RoomSpec, Scenario, mix_scenario, sample_scenario, simulate_rir
from .selection import (
    SelectionConfig,
    SelectionMask,
    select_auto_n_best,
    select_fixed_n_best,
    select_one_best,
    select_soft_n_best,
)
from .weighting import ChannelWeights, oracle_weights, utterance_level_snr

__version__ = "0.1.0"
