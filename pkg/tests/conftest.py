"""Shared fixtures: WAV writing and synthetic pattern tracks with known tempi."""

import struct

import numpy as np
import pytest

from temporef import dsp
from temporef.embedding import TempogramProvider

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def write_wav(path, samples, sample_rate, fmt="pcm16"):
    """Minimal RIFF writer; samples is [n] mono or [n, channels]."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64).T).T
    n, channels = samples.shape
    interleaved = samples.reshape(-1)
    if fmt == "pcm16":
        payload = np.clip(interleaved * 32768.0, -32768, 32767).astype("<i2").tobytes()
        audio_format, bits = 1, 16
    elif fmt == "float32":
        payload = interleaved.astype("<f4").tobytes()
        audio_format, bits = 3, 32
    else:
        raise ValueError(fmt)
    block_align = channels * bits // 8
    fmt_chunk = struct.pack(
        "<HHIIHH", audio_format, channels, sample_rate,
        sample_rate * block_align, block_align, bits,
    )
    body = (
        b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
        + b"data" + struct.pack("<I", len(payload)) + payload
    )
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


def synth_pattern_track(rng, tempo, duration=12.0, sample_rate=16000):
    """Quarter-note pulse at `tempo` with randomized timbre, accents and
    phase, plus an occasional low-amplitude eighth-note ghost layer."""
    n = int(round(duration * sample_rate))
    x = np.zeros(n)
    period = 60.0 / tempo
    pitch = float(np.exp(rng.uniform(np.log(120.0), np.log(700.0))))
    decay = float(rng.uniform(0.08, 0.3))
    phase = float(rng.uniform(0.0, period))
    accent_len = int(rng.integers(2, 5))
    accents = 0.5 + 0.5 * rng.random(accent_len)
    use_ghost = rng.random() < 0.35
    ghost_amp = float(rng.uniform(0.1, 0.3))
    k = 0
    while True:
        t_on = k * period + phase
        i = int(round(t_on * sample_rate))
        if i >= n:
            break
        j = min(n, int(round((t_on + period) * sample_rate)))
        t = np.arange(j - i) / sample_rate
        x[i:j] += 0.8 * accents[k % accent_len] * np.exp(-t / decay) * np.sin(2 * np.pi * pitch * t)
        if use_ghost:
            g = int(round((t_on + period / 2) * sample_rate))
            gj = min(n, g + int(0.1 * sample_rate))
            if g < n:
                tg = np.arange(gj - g) / sample_rate
                x[g:gj] += ghost_amp * np.exp(-tg / 0.05) * np.sin(2 * np.pi * 2 * pitch * tg)
        k += 1
    peak = np.abs(x).max()
    if peak > 1.0:
        x /= peak
    return dsp.AudioClip(x, sample_rate)


def make_pattern_corpus(seed, n_tracks, tempo_range=(60.0, 180.0), duration=12.0):
    """(corpus dict, {track_id: tempo}) of featurized pattern tracks."""
    rng = np.random.default_rng(seed)
    corpus, tempi = {}, {}
    for i in range(n_tracks):
        tempo = float(rng.uniform(*tempo_range))
        track_id = f"track{i:04d}"
        corpus[track_id] = dsp.compute_mel_spectrogram(synth_pattern_track(rng, tempo, duration))
        tempi[track_id] = tempo
    return corpus, tempi


@pytest.fixture(scope="session")
def mel_params():
    return dsp.MelParams()


@pytest.fixture(scope="session")
def provider():
    return TempogramProvider(frame_rate=100.0)


@pytest.fixture(scope="session")
def click_spec_120():
    clip = dsp.synthesize_tone_track(120, 12.0)
    return dsp.compute_mel_spectrogram(clip)
