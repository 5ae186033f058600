"""Accuracy metrics and the dataset evaluation harness.

Acc1 accepts a prediction within 4% of the annotated tempo; Acc2 also
accepts half, double, a third and three times the annotation, each with
the same relative 4% window.  Boundaries are inclusive.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TemporefError
from .predict import argmax_tempo, knn_tempo, octave_correct, same_tempo_curve

ACC_TOLERANCE = 0.04
OCTAVE_MULTIPLES = (1.0, 0.5, 2.0, 1.0 / 3.0, 3.0)
METHODS = ("argmax", "corrected", "knn")


def acc1_correct(pred, truth):
    """|pred - truth| <= 4% of truth (tolerance relative to truth only)."""
    if pred <= 0 or truth <= 0:
        raise ValueError(f"BPM values must be positive, got pred={pred}, truth={truth}")
    return abs(pred - truth) <= ACC_TOLERANCE * truth


def acc2_correct(pred, truth):
    """Acc1 against truth or any allowed octave multiple of it."""
    return any(acc1_correct(pred, m * truth) for m in OCTAVE_MULTIPLES)


@dataclass
class AnnotatedTrack:
    track_id: str
    source: str  # audio path or external embedding id
    truth_bpm: float

    def __post_init__(self):
        if self.truth_bpm <= 0:
            raise ValueError(f"{self.track_id}: truth BPM must be positive")


@dataclass
class TrackResult:
    track_id: str
    truth_bpm: float
    predicted_bpm: float
    acc1: bool
    acc2: bool
    method: str


@dataclass
class EvalReport:
    dataset: str
    method: str
    results: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (track_id, reason)

    @property
    def n_tracks(self):
        return len(self.results)

    @property
    def acc1(self):
        if not self.results:
            return 0.0
        return float(np.mean([r.acc1 for r in self.results]))

    @property
    def acc2(self):
        if not self.results:
            return 0.0
        return float(np.mean([r.acc2 for r in self.results]))

    def summary_table(self):
        header = f"{'dataset':<16}{'method':<12}{'n':>6}{'failed':>8}{'acc1':>10}{'acc2':>10}"
        row = (
            f"{self.dataset:<16}{self.method:<12}{self.n_tracks:>6}"
            f"{len(self.failures):>8}{self.acc1:>10.4f}{self.acc2:>10.4f}"
        )
        return header + "\n" + row

    def summary_kv(self):
        lines = [
            f"dataset={self.dataset}",
            f"method={self.method}",
            f"n_tracks={self.n_tracks}",
            f"n_failed={len(self.failures)}",
            f"acc1={self.acc1!r}",
            f"acc2={self.acc2!r}",
        ]
        return "\n".join(lines) + "\n"


def predict_tempo(vec, method, bank, model=None):
    """Run one prediction pipeline on a track-level embedding vector."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "knn":
        return knn_tempo(vec, bank)
    if model is None:
        raise ValueError(f"method {method!r} needs a trained model")
    curve = same_tempo_curve(vec, bank, model)
    if method == "argmax":
        return argmax_tempo(curve)
    return octave_correct(curve)


def evaluate(tracks, method, bank, model=None, embed_fn=None, dataset="dataset"):
    """Predict every annotated track and aggregate Acc1/Acc2.

    embed_fn(track) must return the track-level embedding vector; tracks it
    raises on are excluded from the accuracy denominator but listed in
    report.failures.
    """
    if embed_fn is None:
        raise ValueError("evaluate needs an embed_fn to resolve tracks")
    report = EvalReport(dataset=dataset, method=method)
    for track in tracks:
        try:
            vec = embed_fn(track)
            estimate = predict_tempo(vec, method, bank, model)
        except (TemporefError, ValueError, OSError) as exc:
            report.failures.append((track.track_id, str(exc)))
            continue
        report.results.append(
            TrackResult(
                track_id=track.track_id,
                truth_bpm=track.truth_bpm,
                predicted_bpm=estimate.bpm,
                acc1=acc1_correct(estimate.bpm, track.truth_bpm),
                acc2=acc2_correct(estimate.bpm, track.truth_bpm),
                method=method,
            )
        )
    return report


def emit_scatter(report: EvalReport, path):
    """CSV of per-track truth vs prediction (feeds scatter plots)."""
    with open(path, "w") as fh:
        fh.write("track_id,truth_bpm,predicted_bpm,acc1,acc2\n")
        for r in report.results:
            fh.write(
                f"{r.track_id},{float(r.truth_bpm)!r},{float(r.predicted_bpm)!r},"
                f"{int(r.acc1)},{int(r.acc2)}\n"
            )


def load_annotations(path, fmt="tsv"):
    """Read ground-truth tempi.

    tsv: lines "track_id<TAB>bpm".  bpm-files: a directory of <stem>.bpm
    text files, each holding one BPM for the audio file <stem>.wav.
    """
    path = Path(path)
    tracks = []
    if fmt == "tsv":
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'track_id<TAB>bpm'")
                track_id, bpm_text = parts
                try:
                    bpm = float(bpm_text)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: malformed BPM {bpm_text!r}") from None
                if bpm <= 0:
                    raise ValueError(f"{path}:{lineno}: non-positive BPM {bpm}")
                tracks.append(AnnotatedTrack(track_id, track_id, bpm))
    elif fmt == "bpm-files":
        if not path.is_dir():
            raise ValueError(f"{path}: bpm-files format expects a directory")
        for bpm_path in sorted(path.glob("*.bpm")):
            text = bpm_path.read_text().strip()
            try:
                bpm = float(text)
            except ValueError:
                raise ValueError(f"{bpm_path}: malformed BPM {text!r}") from None
            if bpm <= 0:
                raise ValueError(f"{bpm_path}: non-positive BPM {bpm}")
            stem = bpm_path.stem
            tracks.append(AnnotatedTrack(stem, str(path / f"{stem}.wav"), bpm))
    else:
        raise ValueError(f"unknown annotation format {fmt!r}; expected tsv or bpm-files")
    return tracks
