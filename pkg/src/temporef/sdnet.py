"""Same/different-tempo classifier and its from-scratch trainer.

Architecture: a shared linear down-projection applied to both input
embeddings, concatenation, two ReLU dense layers, scalar logit.  Training
is plain mini-batch Adam on binary cross-entropy with a cosine learning-rate
schedule after linear warmup.  Everything runs in float64 numpy; gradients
are hand-derived reverse mode (checked against finite differences in the
test suite).
"""

import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .augment import PairSamplerConfig, sample_pair, source_window_frames
from .errors import DimensionMismatchError, FileFormatError

MODEL_MAGIC = b"SDN1"
MODEL_VERSION = 1
PROJECTION_DIM = 256
HIDDEN_DIM = 128

PARAM_NAMES = ("w_proj", "b_proj", "w_h1", "b_h1", "w_h2", "b_h2", "w_out", "b_out")


@dataclass
class SdnetModel:
    w_proj: np.ndarray  # [dim, proj]
    b_proj: np.ndarray  # [proj]
    w_h1: np.ndarray    # [2*proj, hidden]
    b_h1: np.ndarray    # [hidden]
    w_h2: np.ndarray    # [hidden, hidden]
    b_h2: np.ndarray    # [hidden]
    w_out: np.ndarray   # [hidden]
    b_out: np.ndarray   # scalar ()

    @property
    def dim(self):
        return self.w_proj.shape[0]

    @property
    def proj_dim(self):
        return self.w_proj.shape[1]

    @property
    def hidden_dim(self):
        return self.w_h1.shape[1]

    def params(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20000
    batch_size: int = 256
    lr_init: float = 0.001
    warmup_steps: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    log_interval: int = 1

    def __post_init__(self):
        if self.warmup_steps >= self.steps:
            raise ValueError("warmup_steps must be < steps")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def for_model(cls, model):
        zeros = lambda p: np.zeros_like(p)
        return cls(
            m={k: zeros(p) for k, p in model.params().items()},
            v={k: zeros(p) for k, p in model.params().items()},
        )


def _glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_model(dim, proj_dim=PROJECTION_DIM, hidden_dim=HIDDEN_DIM, seed=0):
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng([seed, 7])
    return SdnetModel(
        w_proj=_glorot(rng, (dim, proj_dim), dim, proj_dim),
        b_proj=np.zeros(proj_dim),
        w_h1=_glorot(rng, (2 * proj_dim, hidden_dim), 2 * proj_dim, hidden_dim),
        b_h1=np.zeros(hidden_dim),
        w_h2=_glorot(rng, (hidden_dim, hidden_dim), hidden_dim, hidden_dim),
        b_h2=np.zeros(hidden_dim),
        w_out=_glorot(rng, (hidden_dim,), hidden_dim, 1),
        b_out=np.zeros(()),
    )


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(logits, labels):
    """Numerically stable mean binary cross-entropy on logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def _forward_trace(model, ea, eb):
    pa = ea @ model.w_proj + model.b_proj
    pb = eb @ model.w_proj + model.b_proj
    x = np.concatenate([pa, pb], axis=1)
    u1 = x @ model.w_h1 + model.b_h1
    h1 = np.maximum(u1, 0.0)
    u2 = h1 @ model.w_h2 + model.b_h2
    h2 = np.maximum(u2, 0.0)
    z = h2 @ model.w_out + model.b_out
    return x, u1, h1, u2, h2, z


def _check_dims(model, ea, eb):
    if ea.shape[1] != model.dim or eb.shape[1] != model.dim:
        raise DimensionMismatchError(
            f"embedding dimension {ea.shape[1]}/{eb.shape[1]} != model dimension {model.dim}"
        )


def forward_batch(model, ea, eb):
    """Logits for batches of embedding pairs; shapes [n, dim] -> [n]."""
    ea = np.atleast_2d(np.asarray(ea, dtype=np.float64))
    eb = np.atleast_2d(np.asarray(eb, dtype=np.float64))
    _check_dims(model, ea, eb)
    return _forward_trace(model, ea, eb)[-1]


def forward(model, e_a, e_b):
    """Single-pair logit; callers apply sigmoid for a probability."""
    return float(forward_batch(model, e_a, e_b)[0])


def loss_and_grads(model, ea, eb, labels):
    """Mean BCE over the batch plus gradients for every parameter tensor.

    ReLU subgradient at exactly 0 is taken as 0.
    Returns (loss, logits, grads dict keyed like PARAM_NAMES).
    """
    ea = np.atleast_2d(np.asarray(ea, dtype=np.float64))
    eb = np.atleast_2d(np.asarray(eb, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    _check_dims(model, ea, eb)
    n = ea.shape[0]
    if n == 0:
        raise ValueError("empty batch")

    x, u1, h1, u2, h2, z = _forward_trace(model, ea, eb)
    loss = bce_loss(z, y)

    gz = (sigmoid(z) - y) / n
    g_w_out = h2.T @ gz
    g_b_out = np.asarray(gz.sum())
    gu2 = np.outer(gz, model.w_out) * (u2 > 0)
    g_w_h2 = h1.T @ gu2
    g_b_h2 = gu2.sum(axis=0)
    gu1 = (gu2 @ model.w_h2.T) * (u1 > 0)
    g_w_h1 = x.T @ gu1
    g_b_h1 = gu1.sum(axis=0)
    gx = gu1 @ model.w_h1.T
    proj = model.proj_dim
    gpa, gpb = gx[:, :proj], gx[:, proj:]
    g_w_proj = ea.T @ gpa + eb.T @ gpb
    g_b_proj = (gpa + gpb).sum(axis=0)

    grads = {
        "w_proj": g_w_proj,
        "b_proj": g_b_proj,
        "w_h1": g_w_h1,
        "b_h1": g_b_h1,
        "w_h2": g_w_h2,
        "b_h2": g_b_h2,
        "w_out": g_w_out,
        "b_out": g_b_out,
    }
    return loss, z, grads


def lr_at(step, cfg: TrainConfig):
    """Linear warmup to lr_init, then cosine anneal to 0 at cfg.steps."""
    if step < cfg.warmup_steps:
        return cfg.lr_init * step / cfg.warmup_steps
    progress = (step - cfg.warmup_steps) / (cfg.steps - cfg.warmup_steps)
    return cfg.lr_init * 0.5 * (1.0 + math.cos(math.pi * progress))


def adam_step(model, state, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place. Returns (model, state)."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name in PARAM_NAMES:
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        update = lr * (state.m[name] / c1) / (np.sqrt(state.v[name] / c2) + eps)
        setattr(model, name, getattr(model, name) - update)
    return model, state


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (step, lr, loss, acc)

    def append(self, step, lr, loss, acc):
        self.rows.append((step, lr, loss, acc))

    def running_accuracy(self, window=100):
        tail = [row[3] for row in self.rows[-window:]]
        return float(np.mean(tail)) if tail else 0.0

    def save_csv(self, path):
        with open(path, "w") as fh:
            fh.write("step,lr,loss,acc\n")
            for step, lr, loss, acc in self.rows:
                fh.write(f"{step},{lr!r},{loss!r},{acc!r}\n")


def train_on_batches(model, batch_fn, cfg: TrainConfig):
    """Drive Adam over batches from batch_fn(step) -> (ea, eb, labels).

    The update for 0-based batch s uses lr_at(s + 1), so warmup ends exactly
    on the configured step count.  Logged loss/accuracy are measured before
    the update.
    """
    state = AdamState.for_model(model)
    log = TrainLog()
    for step in range(cfg.steps):
        ea, eb, labels = batch_fn(step)
        loss, logits, grads = loss_and_grads(model, ea, eb, labels)
        acc = float(np.mean((logits > 0.0) == (np.asarray(labels) > 0.5)))
        lr = lr_at(step + 1, cfg)
        adam_step(model, state, grads, lr, cfg.beta1, cfg.beta2, cfg.eps)
        if step % cfg.log_interval == 0 or step == cfg.steps - 1:
            log.append(step, lr, loss, acc)
    return log


def train(corpus, provider, cfg: TrainConfig, sampler_cfg: PairSamplerConfig | None = None):
    """Train on a spectrogram corpus with online pair sampling.

    corpus: mapping track_id -> MelSpectrogram (or a list of spectrograms).
    The provider is fixed; only the classifier is updated.
    Returns (model, TrainLog).
    """
    sampler_cfg = sampler_cfg or PairSamplerConfig()
    specs = list(corpus.values()) if hasattr(corpus, "values") else list(corpus)
    if not specs:
        raise ValueError("empty corpus")
    window = source_window_frames(specs[0].frame_rate, sampler_cfg.factor_range)
    usable = [s for s in specs if s.num_frames >= 2 * window]
    if not usable:
        raise ValueError(
            f"no usable tracks: all shorter than {2 * window} frames"
        )

    rng = np.random.default_rng([cfg.seed, 101])
    model = init_model(provider.dim, seed=cfg.seed)

    def batch_fn(step):
        ea = np.empty((cfg.batch_size, provider.dim))
        eb = np.empty((cfg.batch_size, provider.dim))
        labels = np.empty(cfg.batch_size)
        for i in range(cfg.batch_size):
            track = usable[int(rng.integers(len(usable)))]
            pair = sample_pair(track, sampler_cfg, rng)
            ea[i] = provider.embed(pair.a)
            eb[i] = provider.embed(pair.b)
            labels[i] = pair.label
        return ea, eb, labels

    log = train_on_batches(model, batch_fn, cfg)
    return model, log


# ---------------------------------------------------------------------------
# model file (magic "SDN1", f32 tensors, trailing CRC32)
# ---------------------------------------------------------------------------

def save_model(model: SdnetModel, path):
    body = bytearray()
    body += MODEL_MAGIC
    body += struct.pack("<II", MODEL_VERSION, model.dim)
    for name in PARAM_NAMES:
        tensor = np.asarray(getattr(model, name), dtype="<f4")
        body += struct.pack("<I", tensor.ndim)
        for d in tensor.shape:
            body += struct.pack("<I", d)
        body += tensor.tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def load_model(path) -> SdnetModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MODEL_MAGIC:
        raise FileFormatError(f"{path}: bad magic, not a model file")
    stored_crc = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise FileFormatError(f"{path}: checksum mismatch, file corrupted")
    version, dim = struct.unpack_from("<II", blob, 4)
    if version != MODEL_VERSION:
        raise FileFormatError(f"{path}: unsupported model version {version}")

    pos = 12
    tensors = {}
    for name in PARAM_NAMES:
        if pos + 4 > len(blob) - 4:
            raise FileFormatError(f"{path}: truncated tensor table")
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        if pos + 4 * count > len(blob) - 4:
            raise FileFormatError(f"{path}: truncated tensor payload for {name}")
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=pos)
        tensors[name] = values.reshape(shape).astype(np.float64)
        pos += 4 * count

    model = SdnetModel(**tensors)
    proj, hidden = model.proj_dim, model.hidden_dim
    expected = {
        "w_proj": (dim, proj),
        "b_proj": (proj,),
        "w_h1": (2 * proj, hidden),
        "b_h1": (hidden,),
        "w_h2": (hidden, hidden),
        "b_h2": (hidden,),
        "w_out": (hidden,),
        "b_out": (),
    }
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise FileFormatError(
                f"{path}: tensor {name} has shape {tensors[name].shape}, expected {shape}"
            )
    return model
