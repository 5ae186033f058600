"""Synthetic reference bank: one or more embedded tone tracks per integer BPM."""

from dataclasses import dataclass

import numpy as np

from .dsp import MelParams, compute_mel_spectrogram, synthesize_tone_track
from .embedding import load_embeddings, save_embeddings, track_embedding
from .errors import IncompleteBankError

BPM_MIN = 30
BPM_MAX = 300
DEFAULT_REF_DURATION = 30.0


@dataclass
class ReferenceBank:
    """Ordered map tempo -> track-level embedding vectors, all of one dimension."""

    entries: dict  # {tempo: [np.ndarray, ...]}
    dim: int

    @property
    def bpm_grid(self):
        return np.arange(BPM_MIN, BPM_MAX + 1)

    @property
    def num_embeddings(self):
        return sum(len(v) for v in self.entries.values())

    def validate_complete(self):
        missing = [t for t in range(BPM_MIN, BPM_MAX + 1) if not self.entries.get(t)]
        if missing:
            raise IncompleteBankError(
                "incomplete bank: missing " + ", ".join(str(t) for t in missing)
            )


def reference_clip(tempo, duration, variant=0, seed=0, sample_rate=16000):
    """Reference audio for one tempo; variants >= 1 get a seeded phase shift."""
    offset = 0.0
    if variant > 0:
        rng = np.random.default_rng([seed, tempo, variant])
        offset = float(rng.uniform(0.0, 60.0 / tempo))
    return synthesize_tone_track(
        tempo, duration, sample_rate=sample_rate, onset_offset=offset
    )


def build_bank(
    provider,
    mel_params: MelParams | None = None,
    duration=DEFAULT_REF_DURATION,
    variants_per_tempo=1,
    seed=0,
) -> ReferenceBank:
    """Synthesize, featurize and embed the full 30..300 BPM reference grid."""
    if duration < 10.0:
        raise ValueError(f"reference duration must be >= 10 s, got {duration}")
    if variants_per_tempo < 1:
        raise ValueError("variants_per_tempo must be >= 1")
    mel_params = mel_params or MelParams()
    entries = {}
    for tempo in range(BPM_MIN, BPM_MAX + 1):
        vectors = []
        for variant in range(variants_per_tempo):
            clip = reference_clip(tempo, duration, variant, seed, mel_params.sample_rate)
            spec = compute_mel_spectrogram(clip, mel_params)
            vectors.append(track_embedding(spec, provider).values)
        entries[tempo] = vectors
    return ReferenceBank(entries, provider.dim)


def save_bank(bank: ReferenceBank, path):
    bank.validate_complete()
    records = []
    for tempo in sorted(bank.entries):
        for variant, vec in enumerate(bank.entries[tempo]):
            records.append((f"ref/{tempo}/{variant}", vec))
    save_embeddings(path, bank.dim, records)


def load_bank(path, expected_dim=None) -> ReferenceBank:
    dim, index = load_embeddings(path, expected_dim=expected_dim)
    entries = {}
    for tid, vectors in index.items():
        parts = tid.split("/")
        if len(parts) != 3 or parts[0] != "ref" or not parts[1].isdigit() or not parts[2].isdigit():
            raise IncompleteBankError(f"{path}: unexpected record id {tid!r}")
        tempo, variant = int(parts[1]), int(parts[2])
        entries.setdefault(tempo, []).append((variant, vectors[0]))
    bank_entries = {
        tempo: [vec for _, vec in sorted(pairs)] for tempo, pairs in sorted(entries.items())
    }
    bank = ReferenceBank(bank_entries, dim)
    bank.validate_complete()
    return bank
