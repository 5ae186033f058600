"""Audio loading, tone synthesis and log-mel spectrograms.

The WAV reader is a minimal RIFF walker because the stdlib ``wave`` module
cannot read IEEE-float files.  Supported encodings: PCM 16-bit LE and
IEEE-float 32-bit, mono or multichannel (averaged to mono).
"""

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import FileFormatError, WavFormatError

C4_HZ = 261.626
TONE_DECAY_SECONDS = 0.15
TONE_PEAK = 0.8

MELS_MAGIC = b"MELS"
MELS_VERSION = 1


@dataclass
class AudioClip:
    """Mono audio: float samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size == 0:
            raise ValueError("audio clip has no samples")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MelParams:
    sample_rate: int = 16000
    window_length: int = 1024
    hop_length: int = 160
    num_bands: int = 96
    fmin: float = 30.0
    fmax: float = 8000.0
    log_offset: float = 1e-6

    def __post_init__(self):
        if not (0 < self.fmin < self.fmax <= self.sample_rate / 2):
            raise ValueError(f"need 0 < fmin < fmax <= sample_rate/2, got {self}")
        if self.hop_length > self.window_length:
            raise ValueError("hop_length must not exceed window_length")
        if self.num_bands < 8:
            raise ValueError("num_bands must be >= 8")
        if self.log_offset <= 0:
            raise ValueError("log_offset must be positive")

    @property
    def frame_rate(self):
        return self.sample_rate / self.hop_length


@dataclass
class MelSpectrogram:
    """Log-mel matrix [num_frames, num_bands] with its frame rate.

    `params` is None for spectrograms loaded from a cache file (the cache
    format does not store them).
    """

    data: np.ndarray
    frame_rate: float
    params: MelParams | None = None

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError(f"expected [frames, bands] data, got shape {self.data.shape}")

    @property
    def num_frames(self):
        return self.data.shape[0]

    @property
    def num_bands(self):
        return self.data.shape[1]


# ---------------------------------------------------------------------------
# WAV reading
# ---------------------------------------------------------------------------

def load_wav(path):
    """Read a RIFF/WAVE file into a mono AudioClip scaled to [-1, 1].

    Raises FileNotFoundError for a missing file, WavFormatError for
    malformed files, unsupported encodings and zero-length audio.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"{path}: truncated {cid!r} chunk")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise WavFormatError(f"{path}: missing fmt/data chunk")
    if len(fmt) < 16:
        raise WavFormatError(f"{path}: malformed fmt chunk")

    audio_format, channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if channels < 1 or sample_rate <= 0:
        raise WavFormatError(f"{path}: malformed fmt chunk")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(data[: len(data) - len(data) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(data[: len(data) - len(data) % 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise WavFormatError(
            f"{path}: unsupported encoding (format {audio_format}, {bits}-bit); "
            "expected PCM 16-bit or IEEE-float 32-bit"
        )

    frames = samples.size // channels
    if frames == 0:
        raise WavFormatError(f"{path}: zero-length audio")
    samples = samples[: frames * channels].reshape(frames, channels).mean(axis=1)
    peak = np.max(np.abs(samples))
    if peak > 1.0:
        samples = samples / peak
    return AudioClip(samples, sample_rate)


# ---------------------------------------------------------------------------
# tone synthesis
# ---------------------------------------------------------------------------

def synthesize_tone_track(
    tempo,
    duration,
    pitch=C4_HZ,
    sample_rate=16000,
    onset_offset=0.0,
    peak=TONE_PEAK,
    decay=TONE_DECAY_SECONDS,
):
    """Quarter-note pulse at `tempo` BPM: decaying sine tones, one per beat.

    Onset k lands on sample round(k * 60/tempo * sample_rate); each tone is
    truncated at the next onset.
    """
    if tempo <= 0 or duration <= 0:
        raise ValueError(f"tempo and duration must be positive, got {tempo}, {duration}")
    if not (1 <= tempo <= 1000):
        raise ValueError(f"tempo out of range [1, 1000]: {tempo}")
    if duration < 3.0:
        raise ValueError(f"duration must be >= 3 s, got {duration}")
    if onset_offset < 0:
        raise ValueError("onset_offset must be >= 0")

    n = int(round(duration * sample_rate))
    x = np.zeros(n)
    period = 60.0 / tempo
    k = 0
    while True:
        start = int(round((k * period + onset_offset) * sample_rate))
        if start >= n:
            break
        stop = min(n, int(round(((k + 1) * period + onset_offset) * sample_rate)))
        t = np.arange(stop - start) / sample_rate
        x[start:stop] = peak * np.exp(-t / decay) * np.sin(2.0 * np.pi * pitch * t)
        k += 1
    return AudioClip(x, sample_rate)


# ---------------------------------------------------------------------------
# mel spectrogram
# ---------------------------------------------------------------------------

def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(params: MelParams):
    """Triangular area-normalised filterbank, [num_bands, n_fft//2 + 1]."""
    n_freqs = params.window_length // 2 + 1
    freqs = np.linspace(0.0, params.sample_rate / 2.0, n_freqs)
    mel_pts = np.linspace(_hz_to_mel(params.fmin), _hz_to_mel(params.fmax), params.num_bands + 2)
    hz_pts = _mel_to_hz(mel_pts)

    fb = np.zeros((params.num_bands, n_freqs))
    for b in range(params.num_bands):
        lo, ctr, hi = hz_pts[b], hz_pts[b + 1], hz_pts[b + 2]
        up = (freqs - lo) / (ctr - lo)
        down = (hi - freqs) / (hi - ctr)
        fb[b] = np.clip(np.minimum(up, down), 0.0, None)
    widths = np.maximum(fb.sum(axis=1, keepdims=True), 1e-12)
    return fb / widths


def filterbank_center_frequencies(params: MelParams):
    """Center frequency (Hz) of each triangular filter."""
    mel_pts = np.linspace(_hz_to_mel(params.fmin), _hz_to_mel(params.fmax), params.num_bands + 2)
    return _mel_to_hz(mel_pts)[1:-1]


def num_frames_for(num_samples, params: MelParams):
    if num_samples < params.window_length:
        return 0
    return 1 + (num_samples - params.window_length) // params.hop_length


def compute_mel_spectrogram(clip: AudioClip, params: MelParams | None = None):
    """STFT magnitude -> mel filterbank -> log(log_offset + x).

    The clip's sample rate must match `params` (no resampling here); clips
    shorter than one analysis window are rejected.
    """
    params = params or MelParams()
    if clip.sample_rate != params.sample_rate:
        raise ValueError(
            f"clip sample rate {clip.sample_rate} != {params.sample_rate}; resample upstream"
        )
    if clip.samples.size < params.window_length:
        raise ValueError(
            f"clip too short: {clip.samples.size} samples < window {params.window_length}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, params.window_length)
    frames = frames[:: params.hop_length]
    window = np.hanning(params.window_length)
    spectrum = np.abs(np.fft.rfft(frames * window, axis=1))
    mel = spectrum @ mel_filterbank(params).T
    data = np.log(params.log_offset + mel)
    return MelSpectrogram(data.astype(np.float32), params.frame_rate, params)


# ---------------------------------------------------------------------------
# spectrogram cache file (magic "MELS")
# ---------------------------------------------------------------------------

def save_spectrogram(spec: MelSpectrogram, path):
    payload = np.ascontiguousarray(spec.data, dtype="<f4")
    header = MELS_MAGIC + struct.pack(
        "<IIIf", MELS_VERSION, spec.num_frames, spec.num_bands, spec.frame_rate
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def load_spectrogram(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:4] != MELS_MAGIC:
        raise FileFormatError(f"{path}: bad magic, not a spectrogram cache")
    version, frames, bands, frame_rate = struct.unpack_from("<IIIf", blob, 4)
    if version != MELS_VERSION:
        raise FileFormatError(f"{path}: unsupported cache version {version}")
    need = frames * bands * 4
    body = blob[20 : 20 + need]
    if len(body) < need:
        raise FileFormatError(f"{path}: truncated payload")
    data = np.frombuffer(body, dtype="<f4").reshape(frames, bands)
    return MelSpectrogram(data.copy(), float(frame_rate), None)
