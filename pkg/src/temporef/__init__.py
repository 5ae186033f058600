"""Self-supervised tempo estimation.

Train a binary same/different-tempo classifier on time-stretched mel
spectrogram excerpts of unlabeled audio, then estimate absolute tempo by
scoring a track against a bank of synthetic references (30..300 BPM).
"""

__version__ = "0.1.0"

from .augment import Excerpt, PairSamplerConfig, TrainingPair, sample_pair, time_stretch
from .dsp import AudioClip, MelParams, MelSpectrogram, compute_mel_spectrogram, load_wav, synthesize_tone_track
from .embedding import TempogramProvider, TrackEmbedding, embed_track, track_embedding
from .evaluate import EvalReport, acc1_correct, acc2_correct
from .predict import TempoCurve, TempoEstimate, argmax_tempo, knn_tempo, octave_correct, same_tempo_curve
from .refbank import ReferenceBank, build_bank, load_bank, save_bank
from .sdnet import SdnetModel, TrainConfig, init_model, load_model, save_model, train
