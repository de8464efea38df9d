"""Training, evaluation, ablation, qualitative reports and gradient verification."""

import csv
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .corpus import Vocab, build_vocab, strip_special
from .generator import LossWeights, free_running_penalties, greedy_decode
from .metrics import PartScores, meteor_sentence, score_parts, write_report
from .model import Batch, CommentaryModel, ModelDims
from .numerics import (AdamState, LrSchedule, adam_step, backward, gradient_errors, load_checkpoint,
                       lr_at, save_checkpoint)
from .splitmix import SplitMix64, derive_seed
from .synth import DEFAULT_MAX_LEN, load_dataset, make_clip

STAGING_MODES = ("joint", "two-phase")

PRESETS = {
    "paper-bddx": {"base_lr": 1e-5, "batch_size": 32, "decay_steps": 11600},
    "paper-sax": {"base_lr": 6e-7, "batch_size": 16, "decay_steps": 3500},
    "desk": {"base_lr": 1e-3, "batch_size": 16, "decay_steps": 500},
}

LOG_FIELDS = ("step", "lr", "L_total", "L_g", "L_pos", "P_null", "P_struct", "L_ctrl",
              "null_count", "start_count", "sep_count", "end_count")


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class DatasetMismatch(ValueError):
    pass


@dataclass
class TrainConfig:
    dataset: str = ""
    preset: str = "desk"
    max_len: int = DEFAULT_MAX_LEN
    d_h: int = 64
    d_z: int = 16
    d_p: int = 32
    d_e: int = 32
    G: int = 4
    D: int = 16
    F: int = 8
    batch_size: int = 16
    base_lr: float = 1e-3
    decay_rate: float = 0.96
    decay_steps: int = 500
    epochs: int = 250
    max_steps: int = 0  # 0 means no cap beyond epochs
    seed: int = 0
    lambda_pos: float = 0.3
    gamma_null: float = 4.0
    gamma_other: float = 50.0
    w_ctrl: float = 1.0
    staging: str = "joint"
    threshold: float = 0.5

    def __post_init__(self):
        for key in ("max_len", "d_h", "d_z", "d_p", "d_e", "G", "D", "F", "batch_size",
                    "decay_steps", "epochs"):
            if getattr(self, key) <= 0:
                raise ConfigError(key, f"must be positive, got {getattr(self, key)}")
        for key in ("base_lr", "decay_rate"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, f"must be positive, got {getattr(self, key)}")
        for key in ("max_steps", "gamma_null", "gamma_other", "w_ctrl"):
            if getattr(self, key) < 0:
                raise ConfigError(key, f"must be nonnegative, got {getattr(self, key)}")
        if not 0.0 <= self.lambda_pos <= 1.0:
            raise ConfigError("lambda_pos", f"must lie in [0, 1], got {self.lambda_pos}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold", f"must lie in [0, 1], got {self.threshold}")
        if self.staging not in STAGING_MODES:
            raise ConfigError("staging", f"expected one of {STAGING_MODES}, got {self.staging!r}")
        if self.preset not in PRESETS:
            raise ConfigError("preset", f"expected one of {tuple(PRESETS)}, got {self.preset!r}")
        if self.d_z != self.D:
            # the generator attends over controller contexts, which live in feature space
            raise ConfigError("d_z", f"must equal D ({self.D}), got {self.d_z}")

    @classmethod
    def from_preset(cls, name, **overrides):
        if name not in PRESETS:
            raise ConfigError("preset", f"unknown preset {name!r}")
        return cls(**{"preset": name, **PRESETS[name], **overrides})

    @property
    def weights(self):
        return LossWeights(self.lambda_pos, self.gamma_null, self.gamma_other)

    def dims(self, vocab_size):
        return ModelDims(vocab_size, self.F, self.G, self.D, self.max_len, self.d_h, self.d_p, self.d_e)


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key, value):
    kind = _FIELD_TYPES[key]
    try:
        if kind in (int, "int"):
            number = float(value)
            if number != int(number):
                raise ValueError
            return int(number)
        if kind in (float, "float"):
            number = float(value)
            if not math.isfinite(number):
                raise ValueError
            return number
    except ValueError:
        raise ConfigError(key, f"invalid value {value!r}") from None
    return value


def parse_config_text(text):
    """``key = value`` lines (``#`` comments allowed) -> dict of raw strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(key or f"line {lineno}", "expected 'key = value'")
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown config key")
        out[key] = value.strip()
    return out


def build_config(values=None, base=None):
    """Config from raw ``{key: str}`` values; a ``preset`` key is applied before the others."""
    values = dict(values or {})
    for key in values:
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown config key")
    preset = values.pop("preset", None)
    if base is None:
        base = TrainConfig.from_preset(preset or "desk")
    elif preset is not None:
        base = replace(base, preset=preset, **PRESETS.get(preset, {}))
    typed = {k: _coerce(k, v) for k, v in values.items()}
    return replace(base, **typed)


def load_config(path, overrides=None):
    with open(path, encoding="utf-8") as fh:
        values = parse_config_text(fh.read())
    values.update(overrides or {})
    return build_config(values)


def format_config(config):
    return "".join(f"{k} = {v}\n" for k, v in asdict(config).items())


def check_consistency(config, clips):
    """Raise before training if the clips do not match the configured dimensions."""
    if not clips:
        raise DatasetMismatch("training split is empty")
    want = (config.F, config.G * config.G, config.D)
    for clip in clips:
        if clip.frames.shape != want:
            raise DatasetMismatch(f"clip {clip.clip_id}: frames {clip.frames.shape}, config expects "
                                  f"(F, G*G, D) = {want}")
        if clip.caption.max_len != config.max_len or len(clip.caption.tokens) > config.max_len:
            raise DatasetMismatch(f"clip {clip.clip_id}: caption does not fit max_len {config.max_len}")


def _row_deviation(probs):
    return float(np.max(np.abs(probs.sum(axis=-1) - 1.0)))


@dataclass
class TrainResult:
    model: CommentaryModel
    adam: AdamState
    config: TrainConfig
    log: list
    norm_deviation: dict = field(default_factory=dict)


def total_steps(config, n_train):
    steps = config.epochs * math.ceil(n_train / config.batch_size)
    return min(steps, config.max_steps) if config.max_steps else steps


def epoch_order(seed, epoch, n):
    return SplitMix64(derive_seed(seed, epoch)).permutation(n)


def train(config, splits, log_path=None, on_step=None):
    """Mini-batch teacher-forced training; returns the model, optimizer state and per-step log.

    ``joint`` staging minimises ``w_ctrl * L_ctrl + L_gen`` over all parameters.
    ``two-phase`` spends the first half of the step budget on the controller
    alone and the second half on the generator with the controller frozen.
    ``on_step(model, batch, row)`` is called after every update with the logged row
    (the model still holds that step's forward outputs).
    """
    clips = splits.train
    check_consistency(config, clips)
    vocab = build_vocab([c.caption for c in clips])
    model = CommentaryModel(config.dims(len(vocab)), vocab, seed=config.seed,
                            pos_feed=config.lambda_pos > 0)
    adam = AdamState()
    schedule = LrSchedule(config.base_lr, config.decay_rate, config.decay_steps)
    weights = config.weights
    n_steps = total_steps(config, len(clips))
    ctrl_names = model.param_names("ctrl.")
    gen_names = model.param_names("gen.")
    log = []
    dev = {"alpha": 0.0, "beta": 0.0, "pos": 0.0, "word": 0.0}
    step = epoch = 0
    while step < n_steps:
        order = epoch_order(config.seed, epoch, len(clips))
        epoch += 1
        for start in range(0, len(order), config.batch_size):
            if step >= n_steps:
                break
            batch = Batch.from_clips([clips[i] for i in order[start:start + config.batch_size]], vocab)
            phase = "joint"
            if config.staging == "two-phase":
                phase = "controller" if step < n_steps // 2 else "generator"
            losses = model.losses(batch, weights, config.w_ctrl,
                                  detach_contexts=phase == "generator")
            objective, names = {
                "joint": (losses["L_total"], None),
                "controller": (losses["L_ctrl"] * config.w_ctrl, ctrl_names),
                "generator": (losses["L_gen"], gen_names),
            }[phase]
            lr = lr_at(schedule, step)
            model.store.zero_grad()
            backward(objective)
            adam_step(model.store, adam, lr, names)

            trace, steps, word_probs, pos_probs = model.last_outputs
            dev["alpha"] = max(dev["alpha"], max(_row_deviation(a.data) for a in trace.alphas))
            dev["beta"] = max(dev["beta"], max(_row_deviation(b.data) for b in steps.betas))
            dev["pos"] = max(dev["pos"], _row_deviation(pos_probs.data))
            dev["word"] = max(dev["word"], _row_deviation(word_probs.data))
            counts = model.hard_counts()
            row = {"step": step, "lr": lr}
            row.update({k: float(losses[k].data) for k in LOG_FIELDS[2:8]})
            row.update({"null_count": counts["<NULL>"], "start_count": counts["<START>"],
                        "sep_count": counts["<sep>"], "end_count": counts["<END>"]})
            log.append(row)
            if on_step is not None:
                on_step(model, batch, row)
            step += 1
    model.store.zero_grad()
    if log_path is not None:
        write_log(log_path, log)
    return TrainResult(model, adam, config, log, dev)


def write_log(path, log):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_FIELDS)
    for row in log:
        writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in LOG_FIELDS])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_log(path):
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "step" or k.endswith("_count") else float(v)) for k, v in r.items()}
            for r in rows]


def save_model(path, result):
    """Write the binary checkpoint and a ``.json`` sidecar with config and vocabulary.

    The sidecar leaves out the dataset path so identical runs in different
    directories produce identical files.
    """
    save_checkpoint(path, result.model.store.values(), result.adam)
    config = asdict(result.config)
    config.pop("dataset")
    sidecar = {"config": config, "vocab": list(result.model.vocab.tokens),
               "pos_feed": result.model.pos_feed}
    with open(_sidecar(path), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sidecar(path):
    return os.path.splitext(path)[0] + ".json"


def load_model(path):
    """Return ``(model, adam_state, config)`` from a checkpoint and its sidecar."""
    params, adam = load_checkpoint(path)
    with open(_sidecar(path), encoding="utf-8") as fh:
        sidecar = json.load(fh)
    config = TrainConfig(**sidecar["config"])
    vocab = Vocab(sidecar["vocab"])
    model = CommentaryModel(config.dims(len(vocab)), vocab, seed=config.seed,
                            pos_feed=sidecar["pos_feed"])
    if set(params) != set(model.store.names()):
        raise DatasetMismatch(f"{path}: parameter names do not match the configured model")
    model.store.load(params)
    return model, adam, config


@dataclass
class EvalReport:
    clip_ids: list
    generated: list
    truths: list
    scores: PartScores
    sentence_meteor: list
    flags: tuple
    free_running: dict
    runtime: float
    config: dict
    decoded: list = None

    def __len__(self):
        return len(self.clip_ids)


def evaluate(model, clips, weights=LossWeights(), oracle=False, config=None, batch_size=64):
    """Greedy-decode every clip (ordered by clip id) and score the generated captions.

    In oracle mode the truth captions are scored against themselves.
    """
    if not clips:
        raise ValueError("cannot evaluate an empty split")
    start = time.perf_counter()
    clips = sorted(clips, key=lambda c: c.clip_id)
    truths = [list(c.caption.tokens) for c in clips]
    decoded = None
    if oracle:
        generated = [list(t) for t in truths]
    else:
        decoded = []
        for i in range(0, len(clips), batch_size):
            decoded.extend(greedy_decode(model, clips[i:i + batch_size]))
        generated = [d.tokens for d in decoded]
    scores = score_parts(generated, truths)
    sentence = [meteor_sentence(strip_special(g), strip_special(t)).score
                for g, t in zip(generated, truths)]
    flags = list(scores.flags)
    flags.extend(f"{i}:oov:{tok}" for i, t in enumerate(truths) for tok in t if tok not in model.vocab)
    p_null, p_struct = free_running_penalties(decoded or [], weights)
    return EvalReport([c.clip_id for c in clips], generated, truths, scores, sentence, tuple(flags),
                      {"P_null": p_null, "P_struct": p_struct}, time.perf_counter() - start,
                      dict(config or {}), decoded)


def check_vocab(model, splits):
    """The checkpoint's vocabulary must be the one built from this dataset's training split."""
    expected = build_vocab([c.caption for c in splits.train])
    if expected != model.vocab:
        raise DatasetMismatch("checkpoint vocabulary does not match the dataset's training vocabulary")


def write_samples(path, report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("clip_id", "meteor", "generated", "truth"))
    for cid, m, g, t in zip(report.clip_ids, report.sentence_meteor, report.generated, report.truths):
        writer.writerow((cid, f"{m:.6f}", " ".join(g), " ".join(t)))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


# Ablation ------------------------------------------------------------------

VARIANTS = {
    "Standard Model": LossWeights(0.0, 0.0, 0.0),
    "Standard + PoS Prediction": LossWeights(0.3, 0.0, 0.0),
    "Standard + Token Penalties": LossWeights(0.0, 4.0, 50.0),
    "Standard + PoS Prediction + Token Penalties": LossWeights(0.3, 4.0, 50.0),
}

SWEEP = ((0.0, 0.0), (0.15, 0.0), (0.3, 0.0), (0.0, 4.0), (0.0, 12.0))

TABLE_COLUMNS = (("description", "METEOR"), ("explanation", "METEOR"),
                 ("description", "BLEU"), ("explanation", "BLEU"))


def sweep_label(lambda_pos, gamma_null):
    return f"lambda_pos={lambda_pos:g} + gamma_null={gamma_null:g}"


def sweep_variants():
    return {sweep_label(lp, gn): LossWeights(lp, gn, 0.0) for lp, gn in SWEEP}


def variant_config(config, weights):
    return replace(config, lambda_pos=weights.lambda_pos, gamma_null=weights.gamma_null,
                   gamma_other=weights.gamma_other)


def run_variant(config, splits, weights, split="test"):
    cfg = variant_config(config, weights)
    result = train(cfg, splits)
    return evaluate(result.model, splits.by_name(split), cfg.weights, config=asdict(cfg)).scores


def ablate(config, splits, sweep=False, split="test"):
    """Train and evaluate every variant on the same data and seed: ``{label: PartScores}``."""
    variants = sweep_variants() if sweep else VARIANTS
    return {label: run_variant(config, splits, w, split) for label, w in variants.items()}


def write_table(path, results):
    """Variant rows by METEOR/BLEU x description/explanation columns, as percentages."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variant"] + [f"{metric} {part}" for part, metric in TABLE_COLUMNS])
    for label, scores in results.items():
        writer.writerow([label] + [f"{scores.get(part, metric):.2f}" for part, metric in TABLE_COLUMNS])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


# Qualitative report --------------------------------------------------------

@dataclass
class QualitativeSample:
    clip_id: str
    generated: str
    truth: str
    meteor: float
    category: str
    rank: str  # "top" or "bottom"
    exports: tuple = ()


def categorize(score, threshold=0.5):
    return "good" if score >= threshold else "bad"


def write_pgm(path, image):
    """Plain (P2) greyscale PGM with maxval 255."""
    image = np.asarray(image)
    h, w = image.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines.extend(" ".join(str(int(v)) for v in row) for row in image)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pgm(path):
    with open(path, encoding="ascii") as fh:
        parts = fh.read().split()
    if parts[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    pixels = np.array([int(p) for p in parts[4:]], dtype=np.int64)
    if pixels.size != w * h or pixels.min(initial=0) < 0 or pixels.max(initial=0) > maxval:
        raise ValueError(f"{path}: malformed pixel data")
    return pixels.reshape(h, w), maxval


def attention_image(alpha, G):
    """Spatial weights of one frame as a G x G image scaled so the largest weight is 255."""
    peak = alpha.max()
    scaled = alpha / peak if peak > 0 else alpha
    return np.rint(255 * scaled).astype(np.int64).reshape(G, G)


def export_attention(out_dir, clip_id, decoded, G):
    """PGM per frame of spatial attention and a CSV of temporal attention per word step."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for t, alpha in enumerate(decoded.alphas):
        path = os.path.join(out_dir, f"{clip_id}_f{t}.pgm")
        write_pgm(path, attention_image(alpha, G))
        paths.append(path)
    path = os.path.join(out_dir, f"{clip_id}_beta.csv")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "token"] + [f"f{t}" for t in range(decoded.betas.shape[1])])
    for k, (tok, row) in enumerate(zip(decoded.tokens, decoded.betas)):
        writer.writerow([k, tok] + [f"{b:.6f}" for b in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    paths.append(path)
    return tuple(paths)


def qualitative_report(report, k=2, threshold=0.5, out_dir=None, G=None):
    """Top-k and bottom-k samples by sentence METEOR, with attention exports.

    Returns ``(samples, notes)``; ``k`` larger than the split is clamped.
    """
    notes = []
    n = len(report)
    if k > n:
        notes.append(f"k={k} exceeds split size {n}; clamped to {n}")
        k = n
    order = sorted(range(n), key=lambda i: (-report.sentence_meteor[i], report.clip_ids[i]))
    picks = [(i, "top") for i in order[:k]] + [(i, "bottom") for i in order[::-1][:k]]
    samples = []
    for i, rank in picks:
        exports = ()
        if out_dir is not None and report.decoded is not None:
            exports = export_attention(out_dir, report.clip_ids[i], report.decoded[i], G)
        score = report.sentence_meteor[i]
        samples.append(QualitativeSample(report.clip_ids[i], " ".join(report.generated[i]),
                                         " ".join(report.truths[i]), score,
                                         categorize(score, threshold), rank, exports))
    return samples, notes


def write_qualitative(path, samples, threshold):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("rank", "clip_id", "category", "meteor", "threshold", "generated", "truth",
                     "exports"))
    for s in samples:
        exports = ";".join(os.path.basename(p) for p in s.exports)
        writer.writerow((s.rank, s.clip_id, s.category, f"{s.meteor:.6f}", f"{threshold:g}",
                         s.generated, s.truth, exports))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


# Gradient verification -----------------------------------------------------

OBJECTIVES = ("L_g", "L_pos", "P_null", "P_struct", "L_ctrl", "L_total")


@dataclass
class GradReport:
    errors: dict  # objective -> parameter -> max relative error
    disconnected: dict  # parameter -> max |grad| when the PoS path is switched off
    runtime: float

    @property
    def max_error(self):
        return max(e for per in self.errors.values() for e in per.values())


def verify_gradients(config=None, coords_per_param=32, eps=1e-5):
    """Finite-difference check of every parameter under each loss component.

    Runs on a small model (d_h <= 16) and two synthetic clips.  Also reports
    the gradient of the PoS parameters when lambda_pos = 0 and the PoS input
    to the word head is zeroed; it must be exactly zero.
    """
    config = config or TrainConfig()
    start = time.perf_counter()
    F, G, D, max_len = 3, 2, 4, 16
    clips = [make_clip(derive_seed(config.seed, i), F, G, D, max_len) for i in range(2)]
    vocab = build_vocab([c.caption for c in clips])
    dims = ModelDims(len(vocab), F, G, D, max_len, d_h=min(config.d_h, 6), d_p=5, d_e=5)
    model = CommentaryModel(dims, vocab, seed=config.seed)
    batch = Batch.from_clips(clips, vocab)
    weights = LossWeights(0.3, 4.0, 50.0)

    def objectives():
        out = model.losses(batch, weights, w_ctrl=1.0)
        return {k: out[k] for k in OBJECTIVES}

    errors = gradient_errors(objectives, model.store, eps=eps, coords_per_param=coords_per_param,
                             seed=config.seed)
    errors = {obj: {name: float(e) for name, e in per.items()} for obj, per in errors.items()}

    plain = CommentaryModel(dims, vocab, seed=config.seed, pos_feed=False)
    plain.store.zero_grad()
    backward(plain.losses(batch, LossWeights(0.0, 4.0, 50.0))["L_total"])
    disconnected = {name: float(np.abs(plain.store.grad(name)).max())
                    for name in plain.param_names("gen.pos.") + ["gen.word.W_pos"]}
    return GradReport(errors, disconnected, time.perf_counter() - start)


def write_gradcheck(path, report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("objective", "parameter", "max_rel_error"))
    for obj, per in report.errors.items():
        for name, err in per.items():
            writer.writerow((obj, name, f"{err:.3e}"))
    for name, g in report.disconnected.items():
        writer.writerow(("disconnected", name, f"{g:.3e}"))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


__all__ = ["TrainConfig", "PRESETS", "ConfigError", "DatasetMismatch", "parse_config_text",
           "build_config", "load_config", "train", "TrainResult", "save_model", "load_model",
           "evaluate", "EvalReport", "ablate", "VARIANTS", "SWEEP", "qualitative_report",
           "QualitativeSample", "verify_gradients", "GradReport", "load_dataset", "write_report",
           "write_table", "write_log", "read_log"]
