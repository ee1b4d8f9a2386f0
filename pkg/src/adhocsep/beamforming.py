"""Mask-driven MVDR beamforming on a selected subset of channels.

Covariances, steering vectors and filters are stored per frequency with the
frequency axis first: ``(F, W', W')`` and ``(F, W')``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dsp import (
    FrameParams,
    Mask,
    Spectrogram,
    Waveform,
    istft,
    masked_reconstruction,
    stft,
)
from .errors import DegenerateFrequencyError, SelectionError, ShapeMismatchError
from .room import MixtureRecord
from .selection import SelectionMask

log = logging.getLogger(__name__)

DIAG_LOADING = 1e-6
EPS_ABS = 1e-10
STEERING_MODES = ("target-cov", "interference-cov")


@dataclass
class SpatialCovariance:
    matrices: np.ndarray
    degenerate_bins: tuple = ()

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=np.complex128)
        if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
            raise ShapeMismatchError(f"expected (F, W, W), got {self.matrices.shape}")

    @property
    def num_channels(self) -> int:
        return self.matrices.shape[1]


@dataclass
class SteeringVector:
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.complex128)
        if self.vectors.ndim != 2:
            raise ShapeMismatchError(f"expected (F, W), got {self.vectors.shape}")


@dataclass
class BeamformerFilter:
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.complex128)
        if self.weights.ndim != 2:
            raise ShapeMismatchError(f"expected (F, W), got {self.weights.shape}")

    @property
    def num_channels(self) -> int:
        return self.weights.shape[1]


def combine_masks(masks) -> Mask:
    """Elementwise product of per-channel masks."""
    masks = [m if isinstance(m, Mask) else Mask(m) for m in masks]
    if not masks:
        raise ValueError("need at least one mask")
    shape = masks[0].shape
    out = np.ones(shape)
    for m in masks:
        if m.shape != shape:
            raise ShapeMismatchError(f"mask shapes differ: {shape} vs {m.shape}")
        out = out * m.values
    return Mask(out)


def _stack(specs) -> np.ndarray:
    """Channels stacked as ``(T, F, W)``."""
    if not specs:
        raise ValueError("need at least one spectrogram")
    shape = specs[0].shape
    for s in specs:
        if s.shape != shape:
            raise ShapeMismatchError(f"spectrogram shapes differ: {shape} vs {s.shape}")
    return np.stack([s.bins for s in specs], axis=-1)


def estimate_spatial_covariance(specs, combined_mask: Mask,
                                allow_degenerate: bool = False) -> SpatialCovariance:
    """Mask-weighted average of ``Y Y^H`` over frames, per frequency.

    Bins whose mask mass is zero raise, unless ``allow_degenerate`` is set, in
    which case they get a zero matrix (diagonal loading then keeps the filter
    well defined) and are listed in ``degenerate_bins``.
    """
    y = _stack(specs)
    m = combined_mask.values
    if m.shape != y.shape[:2]:
        raise ShapeMismatchError(f"mask {m.shape} vs spectrograms {y.shape[:2]}")
    mass = m.sum(axis=0)
    bad = np.flatnonzero(mass <= 0)
    if bad.size and not allow_degenerate:
        raise DegenerateFrequencyError(f"zero mask mass at bins {bad.tolist()}")
    phi = np.einsum("tf,tfi,tfj->fij", m, y, np.conj(y))
    safe = np.where(mass > 0, mass, 1.0)
    phi = phi / safe[:, None, None]
    phi[bad] = 0.0
    phi = 0.5 * (phi + np.conj(np.swapaxes(phi, 1, 2)))
    return SpatialCovariance(phi, tuple(int(b) for b in bad))


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    if np.abs(v[k]) == 0:
        return v
    return v * (np.conj(v[k]) / np.abs(v[k]))


def principal_component(cov, tol: float = 1e-8) -> np.ndarray:
    """Unit eigenvector of the largest eigenvalue of a Hermitian matrix.

    The phase is fixed so the largest-magnitude entry is real and positive.
    """
    a = np.asarray(cov, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(np.linalg.norm(a), 1e-300)
    if np.linalg.norm(a - a.conj().T) > tol * scale:
        raise ValueError("matrix is not Hermitian")
    _, vecs = np.linalg.eigh(0.5 * (a + a.conj().T))
    v = vecs[:, -1]
    v = v / np.linalg.norm(v)
    return _fix_phase(v)


def steering_from_covariance(cov: SpatialCovariance) -> SteeringVector:
    return SteeringVector(np.stack([principal_component(m) for m in cov.matrices]))


def load_diagonal(phi: np.ndarray, delta: float = DIAG_LOADING) -> np.ndarray:
    """``phi + delta * (tr(phi)/W' + EPS_ABS) * I``."""
    w = phi.shape[-1]
    tr = np.real(np.trace(phi)) / w
    return phi + delta * (tr + EPS_ABS) * np.eye(w)


def mvdr_filter(phi_ii: SpatialCovariance, steering: SteeringVector,
                diag_loading: float = DIAG_LOADING) -> BeamformerFilter:
    """``w = phi^-1 c / (c^H phi^-1 c)`` per frequency, after diagonal loading."""
    phi = phi_ii.matrices
    c = steering.vectors
    if c.shape != phi.shape[:2]:
        raise ShapeMismatchError(f"steering {c.shape} vs covariance {phi.shape}")
    out = np.zeros(c.shape, dtype=np.complex128)
    for f in range(phi.shape[0]):
        a = load_diagonal(phi[f], diag_loading) if diag_loading > 0 else phi[f]
        try:
            u = np.linalg.solve(a, c[f])
        except np.linalg.LinAlgError as exc:
            raise DegenerateFrequencyError(f"covariance at bin {f} is singular") from exc
        denom = np.vdot(c[f], u)
        if not np.isfinite(denom) or abs(denom) < 1e-300:
            raise DegenerateFrequencyError(f"no distortionless filter at bin {f}")
        # dividing by c^H u (not its real part) makes w^H c = 1 exactly
        out[f] = u / denom
    return BeamformerFilter(out)


def apply_beamformer(filt: BeamformerFilter, specs) -> Spectrogram:
    y = _stack(specs)
    if y.shape[2] != filt.num_channels:
        raise ShapeMismatchError(
            f"filter has {filt.num_channels} channels, got {y.shape[2]} spectrograms"
        )
    if y.shape[1] != filt.weights.shape[0]:
        raise ShapeMismatchError("filter and spectrograms disagree on the bin count")
    out = np.einsum("fw,tfw->tf", np.conj(filt.weights), y)
    return Spectrogram(out, specs[0].params, specs[0].sample_rate)


REFERENCE_MODES = ("mask-snr", "none")


@dataclass
class BeamformResult:
    output: Waveform
    selected: np.ndarray
    reference_channel: int
    filt: BeamformerFilter | None = None
    phi_ii: SpatialCovariance | None = None
    phi_aa: SpatialCovariance | None = None


def mask_snr_reference(specs, masks) -> int:
    """Position (within ``specs``) of the channel with the highest mask-estimated SNR."""
    snr = []
    for s, m in zip(specs, masks):
        p = np.abs(s.bins) ** 2
        snr.append(np.sum(m.values * p) / max(np.sum((1.0 - m.values) * p), 1e-300))
    return int(np.argmax(snr))


def rescale_to_reference(filt: BeamformerFilter, steering: SteeringVector,
                         ref: int) -> BeamformerFilter:
    """Make the filter distortionless for the target as seen by channel ``ref``.

    ``w' = conj(c_ref) w`` so that ``w'^H c = c_ref``: the output then
    estimates the target image at that microphone rather than at a
    unit-norm virtual sensor whose phase reference may hop between bins.
    """
    return BeamformerFilter(filt.weights * np.conj(steering.vectors[:, ref])[:, None])


def beamform_pipeline(record: MixtureRecord, selection: SelectionMask, masks,
                      steering: str = "target-cov", diag_loading: float = DIAG_LOADING,
                      params: FrameParams | None = None, reference: str = "mask-snr",
                      return_details: bool = False):
    """Enhance the target from the selected channels of ``record``.

    ``masks`` holds one target mask per channel of the record (length W) or
    one per selected channel. Selected STFTs are scaled by their selection
    value. With a single selected channel the output is the masked
    reconstruction of that channel. ``reference="mask-snr"`` rescales the
    MVDR output to the selected channel with the best mask-estimated SNR;
    ``"none"`` keeps the unit-norm steering normalisation.
    """
    if steering not in STEERING_MODES:
        raise ValueError(f"steering must be one of {STEERING_MODES}, got {steering!r}")
    if reference not in REFERENCE_MODES:
        raise ValueError(f"reference must be one of {REFERENCE_MODES}, got {reference!r}")
    if len(selection) != record.num_channels:
        raise ShapeMismatchError(
            f"selection has {len(selection)} entries for {record.num_channels} channels"
        )
    sel = selection.support
    if sel.size == 0:
        raise SelectionError("selection is empty")
    masks = [m if isinstance(m, Mask) else Mask(m) for m in masks]
    if len(masks) == record.num_channels:
        masks = [masks[j] for j in sel]
    elif len(masks) != sel.size:
        raise ShapeMismatchError(
            f"{len(masks)} masks for {record.num_channels} channels / {sel.size} selected"
        )
    params = params or FrameParams()
    specs = []
    for j in sel:
        s = stft(record.mixture[j], params)
        specs.append(Spectrogram(selection.p[j] * s.bins, params, s.sample_rate))

    if sel.size == 1:
        out = istft(masked_reconstruction(masks[0], specs[0]))
        if return_details:
            return BeamformResult(out, sel, int(sel[0]))
        return out

    target_mask = combine_masks(masks)
    interf_mask = combine_masks([Mask(1.0 - m.values) for m in masks])
    phi_ii = estimate_spatial_covariance(specs, interf_mask, allow_degenerate=True)
    phi_aa = estimate_spatial_covariance(specs, target_mask, allow_degenerate=True)
    for name, cov in (("interference", phi_ii), ("target", phi_aa)):
        if cov.degenerate_bins:
            log.debug("%s covariance has no mask mass at %d bins", name, len(cov.degenerate_bins))
    src = phi_aa if steering == "target-cov" else phi_ii
    c = steering_from_covariance(src)
    filt = mvdr_filter(phi_ii, c, diag_loading)
    ref = mask_snr_reference(specs, masks)
    if reference == "mask-snr":
        filt = rescale_to_reference(filt, c, ref)
    out = istft(apply_beamformer(filt, specs))
    if return_details:
        return BeamformResult(out, sel, int(sel[ref]), filt, phi_ii, phi_aa)
    return out
