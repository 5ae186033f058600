"""Command-line pipeline: make-refs, featurize, train, predict, evaluate.

Configuration is a flat "key = value" text file (# comments allowed); CLI
flags override config keys, and --profile bundles smoke/paper-scale
training hyperparameters.  TEMPOREF_CONFIG names the default config file.
Results go to stdout, diagnostics to stderr; every subcommand exits 0 on
success and 1 on error.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import dsp, evaluate as ev, refbank, sdnet
from .augment import PairSamplerConfig
from .embedding import TempogramProvider, load_embeddings, pooled_external_embedding, track_embedding
from .errors import TemporefError

CONFIG_ENV_VAR = "TEMPOREF_CONFIG"

PROFILES = {
    "smoke": {"steps": 2000, "batch_size": 64, "warmup_steps": 200},
    "paper": {"steps": 20000, "batch_size": 256, "warmup_steps": 2000},
}


@dataclass
class RunConfig:
    # mel front-end
    sample_rate: int = 16000
    window_length: int = 1024
    hop_length: int = 160
    num_bands: int = 96
    fmin: float = 30.0
    fmax: float = 8000.0
    log_offset: float = 1e-6
    # pair sampler
    p_same: float = 0.5
    factor_min: float = 0.75
    factor_max: float = 1.5
    min_factor_ratio: float = 1.04
    # training
    steps: int = 20000
    batch_size: int = 256
    lr_init: float = 0.001
    warmup_steps: int = 2000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    log_interval: int = 1
    # provider and artifacts
    provider: str = "builtin"  # builtin | external
    embeddings_file: str = ""
    bank_path: str = "bank.emb"
    model_path: str = "sdnet.model"
    out_dir: str = "."
    ref_duration: float = 30.0
    ref_variants: int = 1
    seed: int = 0
    threads: int = 1

    def mel_params(self):
        return dsp.MelParams(
            sample_rate=self.sample_rate,
            window_length=self.window_length,
            hop_length=self.hop_length,
            num_bands=self.num_bands,
            fmin=self.fmin,
            fmax=self.fmax,
            log_offset=self.log_offset,
        )

    def sampler_config(self):
        return PairSamplerConfig(
            p_same=self.p_same,
            factor_range=(self.factor_min, self.factor_max),
            min_factor_ratio_for_different=self.min_factor_ratio,
            rng_seed=self.seed,
        )

    def train_config(self):
        return sdnet.TrainConfig(
            steps=self.steps,
            batch_size=self.batch_size,
            lr_init=self.lr_init,
            warmup_steps=self.warmup_steps,
            beta1=self.adam_beta1,
            beta2=self.adam_beta2,
            eps=self.adam_eps,
            seed=self.seed,
            log_interval=self.log_interval,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text, path="<config>"):
    """Flat key = value lines into a dict of typed overrides."""
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        overrides[key] = _convert(key, value, f"{path}:{lineno}")
    return overrides


def _convert(key, value, where):
    kind = _FIELD_TYPES[key]
    try:
        if kind in (int, "int"):
            return int(value)
        if kind in (float, "float"):
            return float(value)
        return value
    except ValueError:
        raise ValueError(f"{where}: cannot parse {value!r} as {kind} for {key}") from None


def dump_config(cfg: RunConfig):
    lines = []
    for name, value in asdict(cfg).items():
        text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"


def load_run_config(path=None, profile=None, flag_overrides=None):
    """defaults < config file < profile < explicit flags."""
    values = {}
    config_path = path or os.environ.get(CONFIG_ENV_VAR)
    if config_path:
        values.update(parse_config_text(Path(config_path).read_text(), str(config_path)))
    if profile:
        values.update(PROFILES[profile])
    for key, value in (flag_overrides or {}).items():
        if value is not None:
            values[key] = value
    return RunConfig(**values)


def build_provider(cfg: RunConfig):
    return TempogramProvider(frame_rate=cfg.mel_params().frame_rate)


def _log(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_make_refs(cfg: RunConfig, args):
    if cfg.provider != "builtin":
        raise TemporefError(
            "make-refs needs the builtin provider; with external embeddings, "
            "supply a prebuilt bank file instead"
        )
    provider = build_provider(cfg)
    bank = refbank.build_bank(
        provider,
        cfg.mel_params(),
        duration=cfg.ref_duration,
        variants_per_tempo=cfg.ref_variants,
        seed=cfg.seed,
    )
    out = Path(cfg.out_dir) / cfg.bank_path
    out.parent.mkdir(parents=True, exist_ok=True)
    refbank.save_bank(bank, out)
    print(
        f"bank tempi={len(bank.entries)} variants={cfg.ref_variants} "
        f"embeddings={bank.num_embeddings} dim={bank.dim} path={out}"
    )
    return 0


def cmd_featurize(cfg: RunConfig, args):
    audio_dir = Path(args.audio_dir)
    cache_dir = Path(args.cache_dir) if args.cache_dir else Path(cfg.out_dir) / "mels"
    cache_dir.mkdir(parents=True, exist_ok=True)
    wavs = sorted(audio_dir.glob("*.wav"))
    if not wavs:
        raise TemporefError(f"no .wav files in {audio_dir}")
    params = cfg.mel_params()

    def featurize_one(wav):
        target = cache_dir / (wav.stem + ".mels")
        if target.exists():
            return "skipped"
        spec = dsp.compute_mel_spectrogram(dsp.load_wav(wav), params)
        dsp.save_spectrogram(spec, target)
        return "done"

    done = skipped = failed = 0
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outcomes = pool.map(_safe_call, [(featurize_one, wav) for wav in wavs])
            outcomes = list(outcomes)
    else:
        outcomes = [_safe_call((featurize_one, wav)) for wav in wavs]
    for wav, outcome in zip(wavs, outcomes):
        if outcome == "done":
            done += 1
        elif outcome == "skipped":
            skipped += 1
        else:
            failed += 1
            _log(f"featurize failed for {wav}: {outcome[1]}")
    print(f"featurized={done} skipped={skipped} failed={failed} cache={cache_dir}")
    return 0


def _safe_call(job):
    fn, arg = job
    try:
        return fn(arg)
    except (TemporefError, ValueError, OSError) as exc:
        return ("error", str(exc))


def cmd_train(cfg: RunConfig, args):
    cache_dir = Path(args.cache_dir)
    paths = sorted(cache_dir.glob("*.mels"))
    if not paths:
        raise TemporefError(f"no spectrogram caches in {cache_dir}")
    corpus = {p.stem: dsp.load_spectrogram(p) for p in paths}
    provider = build_provider(cfg)
    _log(f"training on {len(corpus)} tracks, {cfg.steps} steps, batch {cfg.batch_size}")
    model, log = sdnet.train(corpus, provider, cfg.train_config(), cfg.sampler_config())

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / cfg.model_path
    sdnet.save_model(model, model_path)
    log_path = out_dir / "train_log.csv"
    log.save_csv(log_path)
    print(
        f"model={model_path} log={log_path} "
        f"final_loss={log.rows[-1][2]:.4f} running_acc={log.running_accuracy():.4f}"
    )
    return 0


def _resolve_embedding(cfg: RunConfig, source, provider, external_index):
    """Track-level embedding vector for an audio path or external id."""
    path = Path(source)
    if path.exists():
        spec = dsp.compute_mel_spectrogram(dsp.load_wav(path), cfg.mel_params())
        return track_embedding(spec, provider).values
    if external_index is not None and source in external_index:
        return pooled_external_embedding(external_index[source]).values
    raise TemporefError(f"cannot resolve {source!r}: no such file or embedding id")


def _load_external_index(cfg: RunConfig, expected_dim):
    if cfg.provider != "external":
        return None
    if not cfg.embeddings_file:
        raise TemporefError("provider=external needs embeddings_file")
    _, index = load_embeddings(cfg.embeddings_file, expected_dim=expected_dim)
    return index


def cmd_predict(cfg: RunConfig, args):
    bank = refbank.load_bank(Path(cfg.out_dir) / cfg.bank_path)
    model = None
    if args.method != "knn":
        model = sdnet.load_model(Path(cfg.out_dir) / cfg.model_path)
    provider = build_provider(cfg)
    external_index = _load_external_index(cfg, bank.dim)
    vec = _resolve_embedding(cfg, args.input, provider, external_index)
    estimate = ev.predict_tempo(vec, args.method, bank, model)
    if args.emit_curve:
        if estimate.curve is None:
            raise TemporefError("--emit-curve needs method argmax or corrected")
        estimate.curve.save_csv(args.emit_curve)
    print(f"bpm={estimate.bpm:g} method={estimate.method}")
    return 0


def cmd_evaluate(cfg: RunConfig, args):
    tracks = ev.load_annotations(args.annotations, args.format)
    if not tracks:
        raise TemporefError(f"no tracks in {args.annotations}")
    bank = refbank.load_bank(Path(cfg.out_dir) / cfg.bank_path)
    model = None
    if args.method != "knn":
        model = sdnet.load_model(Path(cfg.out_dir) / cfg.model_path)
    provider = build_provider(cfg)
    external_index = _load_external_index(cfg, bank.dim)
    audio_dir = Path(args.audio_dir) if args.audio_dir else None

    def embed_fn(track):
        source = track.source
        if audio_dir is not None and not Path(source).exists():
            candidate = audio_dir / source
            if candidate.suffix != ".wav":
                candidate = candidate.with_suffix(".wav")
            source = str(candidate)
        return _resolve_embedding(cfg, source, provider, external_index)

    dataset = Path(args.annotations).stem
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            vectors = list(pool.map(_safe_call, [(embed_fn, t) for t in tracks]))
        table = {t.track_id: v for t, v in zip(tracks, vectors)}

        def cached_embed(track):
            value = table[track.track_id]
            if isinstance(value, tuple):
                raise TemporefError(value[1])
            return value

        report = ev.evaluate(tracks, args.method, bank, model, cached_embed, dataset)
    else:
        report = ev.evaluate(tracks, args.method, bank, model, embed_fn, dataset)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / f"report_{args.method}.txt"
    report_path.write_text(report.summary_kv())
    scatter_path = out_dir / f"scatter_{args.method}.csv"
    ev.emit_scatter(report, scatter_path)
    for track_id, reason in report.failures:
        _log(f"excluded {track_id}: {reason}")
    print(report.summary_table())
    print(f"report={report_path} scatter={scatter_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(parser):
    parser.add_argument("--config", help=f"config file (default: ${CONFIG_ENV_VAR})")
    parser.add_argument("--profile", choices=sorted(PROFILES))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--bank", dest="bank_path")
    parser.add_argument("--model", dest="model_path")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="temporef",
        description="Self-supervised tempo estimation against a synthetic reference bank.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-refs", help="build and save the 30..300 BPM reference bank")
    _add_common(p)
    p.add_argument("--duration", type=float, dest="ref_duration")
    p.add_argument("--variants", type=int, dest="ref_variants")
    p.set_defaults(fn=cmd_make_refs)

    p = sub.add_parser("featurize", help="cache log-mel spectrograms for a directory of WAVs")
    _add_common(p)
    p.add_argument("audio_dir")
    p.add_argument("--cache-dir")
    p.set_defaults(fn=cmd_featurize)

    p = sub.add_parser("train", help="train the same/different classifier on cached spectrograms")
    _add_common(p)
    p.add_argument("cache_dir")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="estimate the tempo of one track")
    _add_common(p)
    p.add_argument("input", help="audio file or external embedding id")
    p.add_argument("--method", choices=ev.METHODS, default="argmax")
    p.add_argument("--emit-curve", help="write the 271-point probability curve as CSV")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate", help="score a labeled dataset")
    _add_common(p)
    p.add_argument("annotations")
    p.add_argument("--format", choices=("tsv", "bpm-files"), default="tsv")
    p.add_argument("--method", choices=ev.METHODS, default="argmax")
    p.add_argument("--audio-dir")
    p.set_defaults(fn=cmd_evaluate)

    return parser


_CONFIG_KEYS = set(_FIELD_TYPES)


def main(argv=None):
    args = build_parser().parse_args(argv)
    flag_overrides = {
        key: value for key, value in vars(args).items() if key in _CONFIG_KEYS
    }
    try:
        cfg = load_run_config(args.config, args.profile, flag_overrides)
        return args.fn(cfg, args)
    except (TemporefError, ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
