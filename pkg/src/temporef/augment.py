"""Spectrogram time-stretching and same/different training-pair sampling.

A stretch factor f multiplies tempo: the time axis is resampled at
positions j*f, so f > 1 shortens the spectrogram and raises the implied
tempo.  Stretching happens on mel frames, never on the waveform.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import spline_resample
from .dsp import MelSpectrogram

EXCERPT_SECONDS = 3.0
MIN_STRETCH_FRAMES = 4


@dataclass(frozen=True)
class PairSamplerConfig:
    p_same: float = 0.5
    factor_range: tuple = (0.75, 1.5)
    min_factor_ratio_for_different: float = 1.04
    rng_seed: int = 0

    def __post_init__(self):
        lo, hi = self.factor_range
        if not (0.0 < lo <= hi):
            raise ValueError(f"invalid factor range {self.factor_range}")
        if not (0.0 < self.p_same < 1.0):
            raise ValueError(f"p_same must be in (0, 1), got {self.p_same}")
        if self.min_factor_ratio_for_different <= 1.0:
            raise ValueError("min_factor_ratio_for_different must exceed 1")


@dataclass
class Excerpt:
    """Fixed-length spectrogram slice (3 s of frames once cropped)."""

    data: np.ndarray
    frame_rate: float

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)

    @property
    def num_frames(self):
        return self.data.shape[0]


@dataclass
class TrainingPair:
    a: Excerpt
    b: Excerpt
    label: int  # 1 = same tempo, 0 = different
    factor_a: float = 1.0
    factor_b: float = 1.0


def excerpt_frames(frame_rate):
    """Frames per excerpt: round(3 s * frame_rate); 300 at the default 100 fps."""
    return int(round(EXCERPT_SECONDS * frame_rate))


def stretch_frames(data, factor):
    """Resample a [frames, bands] matrix to round(frames / factor) rows."""
    if factor <= 0:
        raise ValueError(f"stretch factor must be positive, got {factor}")
    n = data.shape[0]
    if n < MIN_STRETCH_FRAMES:
        raise ValueError(f"need >= {MIN_STRETCH_FRAMES} frames to stretch, got {n}")
    m = max(1, int(round(n / factor)))
    positions = np.arange(m, dtype=np.float64) * factor
    return spline_resample(data, positions).astype(data.dtype)


def time_stretch(spec, factor):
    """Stretch a MelSpectrogram or Excerpt; output tempo = factor * input tempo."""
    if isinstance(spec, MelSpectrogram):
        return MelSpectrogram(stretch_frames(spec.data, factor), spec.frame_rate, spec.params)
    if isinstance(spec, Excerpt):
        return Excerpt(stretch_frames(spec.data, factor), spec.frame_rate)
    raise TypeError(f"cannot stretch {type(spec).__name__}")


def sample_stretch_factor(rng, factor_range=(0.75, 1.5)):
    """Draw a factor whose log is uniform on [log lo, log hi]."""
    lo, hi = factor_range
    if not (0.0 < lo <= hi):
        raise ValueError(f"invalid factor range {factor_range}")
    return float(np.exp(rng.uniform(math.log(lo), math.log(hi))))


def crop_excerpt(spec, start_frame):
    """Cut the exact 3 s excerpt starting at `start_frame`."""
    length = excerpt_frames(spec.frame_rate)
    if start_frame < 0 or start_frame + length > spec.num_frames:
        raise ValueError(
            f"excerpt [{start_frame}, {start_frame + length}) out of range "
            f"for {spec.num_frames} frames"
        )
    return Excerpt(spec.data[start_frame : start_frame + length].copy(), spec.frame_rate)


def source_window_frames(frame_rate, factor_range):
    """Frames to cut before stretching so even the fastest factor leaves 3 s."""
    return int(math.ceil(EXCERPT_SECONDS * factor_range[1] * frame_rate))


def sample_pair(track: MelSpectrogram, cfg: PairSamplerConfig, rng=None) -> TrainingPair:
    """Cut two windows of one track, stretch, crop, and label them.

    With probability p_same one factor stretches both windows (label 1);
    otherwise two factors at ratio >= min_factor_ratio_for_different are
    drawn by rejection (label 0).  The two source windows start at distinct
    offsets but may overlap.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    window = source_window_frames(track.frame_rate, cfg.factor_range)
    length = excerpt_frames(track.frame_rate)
    if track.num_frames < 2 * window:
        raise ValueError(
            f"track too short: {track.num_frames} frames < {2 * window} "
            "(two source windows)"
        )

    hi = track.num_frames - window  # inclusive max start
    off_a = int(rng.integers(0, hi + 1))
    off_b = int(rng.integers(0, hi))
    if off_b >= off_a:
        off_b += 1

    if rng.random() < cfg.p_same:
        f = sample_stretch_factor(rng, cfg.factor_range)
        fa, fb, label = f, f, 1
    else:
        while True:
            fa = sample_stretch_factor(rng, cfg.factor_range)
            fb = sample_stretch_factor(rng, cfg.factor_range)
            if max(fa, fb) / min(fa, fb) >= cfg.min_factor_ratio_for_different:
                break
        label = 0

    def cut(offset, factor):
        stretched = stretch_frames(track.data[offset : offset + window], factor)
        return Excerpt(stretched[:length], track.frame_rate)

    return TrainingPair(cut(off_a, fa), cut(off_b, fb), label, fa, fb)
