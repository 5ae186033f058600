"""Tempo prediction: same-tempo probability curves, argmax, the three-peak
octave-correction heuristic, and the cosine 1-NN baseline.

All tie-breaks resolve toward the lower BPM.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .sdnet import forward_batch, sigmoid

# A peak pair "counts as an octave" when its ratio is within twice the 4%
# evaluation tolerance of 2.
OCTAVE_RATIO_TOL = 0.08


@dataclass
class TempoCurve:
    """Same-tempo probability per reference BPM."""

    bpm_grid: np.ndarray
    prob: np.ndarray

    def __post_init__(self):
        self.bpm_grid = np.asarray(self.bpm_grid, dtype=np.int64)
        self.prob = np.asarray(self.prob, dtype=np.float64)
        if self.bpm_grid.shape != self.prob.shape:
            raise ValueError("bpm grid and probabilities differ in length")

    def save_csv(self, path):
        with open(path, "w") as fh:
            fh.write("bpm,probability\n")
            for bpm, p in zip(self.bpm_grid, self.prob):
                fh.write(f"{int(bpm)},{float(p)!r}\n")


@dataclass
class TempoEstimate:
    bpm: float
    method: str  # argmax | corrected | knn
    curve: TempoCurve | None = None


def _target_vector(target):
    vec = np.asarray(getattr(target, "values", target), dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError(f"expected a single embedding vector, got shape {vec.shape}")
    return vec


def same_tempo_curve(target, bank, model) -> TempoCurve:
    """Classifier probability that `target` shares each reference's tempo.

    Multiple variants per tempo are aggregated by mean logit before the
    sigmoid.  Deterministic and independent of bank iteration order.
    """
    vec = _target_vector(target)
    bank.validate_complete()
    if bank.dim != model.dim or vec.size != model.dim:
        raise DimensionMismatchError(
            f"dimension mismatch: target {vec.size}, bank {bank.dim}, model {model.dim}"
        )
    grid = bank.bpm_grid
    refs = np.concatenate([np.stack(bank.entries[int(t)]) for t in grid])
    counts = np.array([len(bank.entries[int(t)]) for t in grid])
    logits = forward_batch(model, np.broadcast_to(vec, refs.shape), refs)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    mean_logits = np.array(
        [logits[offsets[i] : offsets[i + 1]].mean() for i in range(grid.size)]
    )
    return TempoCurve(grid, sigmoid(mean_logits))


def argmax_tempo(curve: TempoCurve) -> TempoEstimate:
    """Grid point with maximal probability; ties go to the lower BPM."""
    best = int(np.argmax(curve.prob))
    return TempoEstimate(float(curve.bpm_grid[best]), "argmax", curve)


def curve_peaks(prob):
    """Indices of strict local maxima; a plateau counts once, at its lowest
    index, and only when strictly above both sides (grid endpoints never
    qualify)."""
    peaks = []
    n = prob.shape[0]
    i = 1
    while i < n - 1:
        j = i
        while j + 1 < n and prob[j + 1] == prob[i]:
            j += 1
        if prob[i] > prob[i - 1] and j + 1 < n and prob[i] > prob[j + 1]:
            peaks.append(i)
        i = j + 1
    return peaks


def octave_correct(curve: TempoCurve) -> TempoEstimate:
    """Pick the middle of the three strongest peaks when they stack as
    half/double octaves; otherwise fall back to the argmax."""
    fallback = argmax_tempo(curve)
    peaks = curve_peaks(curve.prob)
    if len(peaks) < 3:
        return TempoEstimate(fallback.bpm, "corrected", curve)
    top3 = sorted(sorted(peaks, key=lambda i: (-curve.prob[i], i))[:3])
    b1, b2, b3 = (float(curve.bpm_grid[i]) for i in top3)
    if abs(b2 / b1 - 2.0) <= OCTAVE_RATIO_TOL and abs(b3 / b2 - 2.0) <= OCTAVE_RATIO_TOL:
        return TempoEstimate(b2, "corrected", curve)
    return TempoEstimate(fallback.bpm, "corrected", curve)


def cosine_similarity(a, b):
    """Cosine of two vectors; -1 when either is (numerically) zero."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na <= 1e-12 or nb <= 1e-12:
        return -1.0
    return float(a @ b / (na * nb))


def knn_tempo(target, bank) -> TempoEstimate:
    """Tempo of the cosine-nearest reference variant (raw embeddings)."""
    vec = _target_vector(target)
    bank.validate_complete()
    if bank.dim != vec.size:
        raise DimensionMismatchError(
            f"dimension mismatch: target {vec.size}, bank {bank.dim}"
        )
    best_sim = -np.inf
    best_tempo = None
    for tempo in sorted(bank.entries):
        for ref in bank.entries[tempo]:
            sim = cosine_similarity(vec, ref)
            if sim > best_sim:
                best_sim = sim
                best_tempo = tempo
    return TempoEstimate(float(best_tempo), "knn", None)
