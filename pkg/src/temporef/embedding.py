"""Excerpt embeddings: the built-in tempogram provider, track-level pooling,
and the binary embedding-file format shared with precomputed external vectors.

Any object with a `dim` attribute and a deterministic `embed(excerpt)` method
is a valid provider; the built-in one is a rhythm feature (onset-envelope
autocorrelation sampled on the integer-BPM lag grid), not a learned network.
"""

import struct
from dataclasses import dataclass

import numpy as np

from ._kernels import lag_autocorr
from .augment import EXCERPT_SECONDS, Excerpt, crop_excerpt, excerpt_frames
from .errors import DimensionMismatchError, FileFormatError

EMB_MAGIC = b"EMB1"
TRACK_HOP_SECONDS = 1.5
_DEGENERATE = 1e-12


@dataclass
class TrackEmbedding:
    """Mean of a track's excerpt-level embedding vectors."""

    values: np.ndarray
    num_excerpts: int

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.num_excerpts < 1:
            raise ValueError("track embedding needs at least one excerpt")


class TempogramProvider:
    """Deterministic tempo-sensitive embedding of a 3 s excerpt.

    Entry b is the normalised autocorrelation of the excerpt's onset
    envelope at lag round(60 * frame_rate / b), for integer BPM b on
    [bpm_min, bpm_max] (271 entries at the defaults).  The vector is
    mean-centred and scaled to unit norm; a constant envelope maps to the
    zero vector.
    """

    def __init__(self, frame_rate=100.0, bpm_min=30, bpm_max=300):
        if bpm_min < 1 or bpm_max <= bpm_min:
            raise ValueError(f"invalid BPM range [{bpm_min}, {bpm_max}]")
        self.frame_rate = float(frame_rate)
        self.bpm_grid = np.arange(bpm_min, bpm_max + 1)
        self.lags = np.round(60.0 * self.frame_rate / self.bpm_grid).astype(np.int64)
        self.dim = int(self.bpm_grid.size)
        length = excerpt_frames(self.frame_rate)
        if self.lags.min() < 1 or self.lags.max() > length - 2:
            raise ValueError(
                f"degenerate lag range [{self.lags.min()}, {self.lags.max()}] "
                f"for {length}-frame excerpts"
            )

    def embed(self, excerpt: Excerpt) -> np.ndarray:
        if abs(excerpt.frame_rate - self.frame_rate) > 1e-9:
            raise ValueError(
                f"excerpt frame rate {excerpt.frame_rate} != provider {self.frame_rate}"
            )
        length = excerpt_frames(self.frame_rate)
        if excerpt.num_frames != length:
            raise ValueError(f"expected {length}-frame excerpt, got {excerpt.num_frames}")
        data = excerpt.data.astype(np.float64)
        onset = np.maximum(np.diff(data, axis=0), 0.0).sum(axis=1)
        onset -= onset.mean()
        if onset @ onset <= _DEGENERATE:
            return np.zeros(self.dim)
        vec = lag_autocorr(onset, self.lags)
        vec -= vec.mean()
        norm = np.linalg.norm(vec)
        if norm <= _DEGENERATE:
            return np.zeros(self.dim)
        return vec / norm


def embed_track(excerpts, provider) -> TrackEmbedding:
    """Element-wise mean of the provider's excerpt vectors."""
    if not excerpts:
        raise ValueError("cannot embed a track with no excerpts")
    vectors = np.stack([np.asarray(provider.embed(e), dtype=np.float64) for e in excerpts])
    return TrackEmbedding(vectors.mean(axis=0), len(excerpts))


def tile_excerpts(spec, hop_seconds=TRACK_HOP_SECONDS):
    """Excerpts tiled over a spectrogram with 50% overlap; partial tail dropped."""
    length = excerpt_frames(spec.frame_rate)
    hop = max(1, int(round(hop_seconds * spec.frame_rate)))
    if spec.num_frames < length:
        raise ValueError(
            f"track too short for one {EXCERPT_SECONDS} s excerpt: {spec.num_frames} frames"
        )
    return [crop_excerpt(spec, start) for start in range(0, spec.num_frames - length + 1, hop)]


def track_embedding(spec, provider, hop_seconds=TRACK_HOP_SECONDS) -> TrackEmbedding:
    return embed_track(tile_excerpts(spec, hop_seconds), provider)


# ---------------------------------------------------------------------------
# embedding file format (magic "EMB1")
#
# little-endian: magic, u32 dim, u32 record count; per record: u16 id length,
# UTF-8 id, u32 vector count V, then V*dim f32 values (V = 1 for track-level).
# ---------------------------------------------------------------------------

def save_embeddings(path, dim, records):
    """Write (track_id, vectors) records; vectors is [V, dim] or a single [dim]."""
    records = [(tid, np.atleast_2d(np.asarray(v, dtype=np.float64))) for tid, v in records]
    for tid, vectors in records:
        if vectors.shape[1] != dim:
            raise DimensionMismatchError(
                f"record {tid!r} has dimension {vectors.shape[1]}, expected {dim}"
            )
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", dim, len(records)))
        for tid, vectors in records:
            tid_bytes = tid.encode("utf-8")
            fh.write(struct.pack("<H", len(tid_bytes)))
            fh.write(tid_bytes)
            fh.write(struct.pack("<I", vectors.shape[0]))
            fh.write(np.ascontiguousarray(vectors, dtype="<f4").tobytes())


def load_embeddings(path, expected_dim=None):
    """Read an embedding file into (dim, {track_id: [V, dim] float64})."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != EMB_MAGIC:
        raise FileFormatError(f"{path}: bad magic, not an embedding file")
    dim, count = struct.unpack_from("<II", blob, 4)
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatchError(f"{path}: file dimension {dim} != expected {expected_dim}")
    index = {}
    pos = 12
    for _ in range(count):
        if pos + 2 > len(blob):
            raise FileFormatError(f"{path}: truncated record header")
        (id_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        if pos + id_len + 4 > len(blob):
            raise FileFormatError(f"{path}: truncated record header")
        tid = blob[pos : pos + id_len].decode("utf-8")
        pos += id_len
        (vcount,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        need = vcount * dim * 4
        if pos + need > len(blob):
            raise FileFormatError(f"{path}: truncated payload for record {tid!r}")
        vectors = np.frombuffer(blob, dtype="<f4", count=vcount * dim, offset=pos)
        index[tid] = vectors.reshape(vcount, dim).astype(np.float64)
        pos += need
    return dim, index


def pooled_external_embedding(vectors) -> TrackEmbedding:
    """Track-level embedding from a loaded record (mean when excerpt-level)."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    return TrackEmbedding(vectors.mean(axis=0), vectors.shape[0])
