"""Deterministic templated driving scenarios rendered to features, controls and captions.

A scenario names what the ego vehicle does and which agent caused it.  The
caption is a fixed template over the scenario; the feature grid places the
agent's signature in the grid cell of its lane, and the ego action is written
into a block of channels shared by every cell.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .corpus import Caption, pos_tag, tokenize
from .splitmix import SplitMix64, mix64

EGO_ACTIONS = ("stopping", "accelerating", "moving", "slowing", "turning-left", "turning-right")
EGO_PHRASES = {
    "stopping": "stopping",
    "accelerating": "accelerating",
    "moving": "moving",
    "slowing": "slowing down",
    "turning-left": "turning left",
    "turning-right": "turning right",
}
AGENTS = ("pedestrian", "car", "cyclist", "bus", "van", "traffic-light")
AGENT_PHRASES = {a: a.replace("-", " ") for a in AGENTS}
LOCATIONS = ("ego's lane", "left lane", "right lane", "opposite lane")

# (cause_agent, cause_action) pairs a scenario may use.
COMPATIBILITY = (
    ("pedestrian", "is crossing"), ("pedestrian", "is waiting"), ("pedestrian", "is walking"),
    ("car", "is stopping"), ("car", "is moving"), ("car", "is parked"),
    ("car", "is pulling out"), ("car", "is overtaking"), ("car", "is reversing"),
    ("cyclist", "is crossing"), ("cyclist", "is moving"), ("cyclist", "is overtaking"),
    ("cyclist", "is stopping"),
    ("bus", "is stopping"), ("bus", "is moving"), ("bus", "is parked"), ("bus", "is merging"),
    ("van", "is parked"), ("van", "is moving"), ("van", "is reversing"), ("van", "is merging"),
    ("traffic-light", "is red"), ("traffic-light", "is green"), ("traffic-light", "is yellow"),
    ("traffic-light", "is not green"),
)
CAUSE_ACTIONS = tuple(sorted({act for _, act in COMPATIBILITY}))

DEFAULT_MAX_LEN = 18
DEFAULT_RATIOS = (0.75, 0.125, 0.125)
SPLIT_NAMES = ("train", "validation", "test")

# Domain-separation constants for the signature streams.
_AGENT_STREAM = 0xA6E7
_ACTION_STREAM = 0xAC71
_LOCATION_STREAM = 0x10CA
_EGO_STREAM = 0xE60
_NOISE_STREAM = 0x0153


@dataclass(frozen=True)
class Scenario:
    ego_action: str
    cause_agent: str
    cause_action: str
    location: str
    seed: int

    def __post_init__(self):
        if (self.cause_agent, self.cause_action) not in COMPATIBILITY:
            raise ValueError(f"incompatible cause: {self.cause_agent} {self.cause_action}")
        if self.ego_action not in EGO_ACTIONS or self.location not in LOCATIONS:
            raise ValueError(f"invalid scenario {self}")


@dataclass
class Clip:
    clip_id: str
    frames: np.ndarray  # (F, G*G, D)
    controls: np.ndarray  # (F, 2): acceleration m/s^2, course change deg/s
    caption: Caption

    def __post_init__(self):
        if len(self.frames) != len(self.controls):
            raise ValueError("frames and controls must have equal length")
        if not (np.all(np.isfinite(self.frames)) and np.all(np.isfinite(self.controls))):
            raise ValueError(f"clip {self.clip_id} has non-finite values")

    @property
    def tags(self):
        return pos_tag(self.caption.padded)

    def to_json(self):
        return json.dumps({
            "id": self.clip_id,
            "frames": self.frames.tolist(),
            "controls": self.controls.tolist(),
            "caption": self.caption.text,
        }, separators=(",", ":"))

    @classmethod
    def from_json(cls, line, max_len):
        rec = json.loads(line)
        return cls(rec["id"], np.asarray(rec["frames"], dtype=np.float64),
                   np.asarray(rec["controls"], dtype=np.float64).reshape(-1, 2),
                   Caption.from_text(rec["caption"], max_len))


@dataclass
class DatasetSplits:
    train: list
    validation: list
    test: list
    ratios: tuple = DEFAULT_RATIOS

    def __iter__(self):
        return iter((self.train, self.validation, self.test))

    def by_name(self, name):
        if name not in SPLIT_NAMES:
            raise KeyError(f"unknown split {name!r}; expected one of {SPLIT_NAMES}")
        return getattr(self, name)


def sample_scenario(seed):
    rng = SplitMix64(seed)
    ego = EGO_ACTIONS[rng.below(len(EGO_ACTIONS))]
    agent, action = COMPATIBILITY[rng.below(len(COMPATIBILITY))]
    location = LOCATIONS[rng.below(len(LOCATIONS))]
    return Scenario(ego, agent, action, location, seed)


def caption_text(s):
    return (f"<START> car is {EGO_PHRASES[s.ego_action]} <sep> because "
            f"{AGENT_PHRASES[s.cause_agent]} {s.cause_action} on {s.location} <END>")


def realize_caption(s, max_len=DEFAULT_MAX_LEN):
    return Caption(tuple(tokenize(caption_text(s))), max_len)


def template_lexicon():
    """Every interior word the caption template can produce."""
    words = set("car is because on".split())
    for phrase in list(EGO_PHRASES.values()) + list(AGENT_PHRASES.values()) + list(LOCATIONS):
        words.update(tokenize(phrase))
    for _, act in COMPATIBILITY:
        words.update(tokenize(act))
    return words


def location_cell(location, G):
    """Row-major cell index of a lane in a G x G grid (bottom row is nearest to ego)."""
    mid = G // 2
    row, col = {
        "ego's lane": (G - 1, mid),
        "left lane": (G - 1, max(0, mid - 1)),
        "right lane": (G - 1, min(G - 1, mid + 1)),
        "opposite lane": (max(0, G - 2), max(0, mid - 2)),
    }[location]
    return row * G + col


def channel_split(D):
    """Number of object channels and of global ego channels."""
    ego = max(1, D // 4) if D >= 2 else 0
    return D - ego, ego


def _signature(stream, index, width):
    return SplitMix64(mix64(stream * 1000 + index)).uniform_array((width,), -1.0, 1.0)


def agent_signature(agent, D):
    return _signature(_AGENT_STREAM, AGENTS.index(agent), channel_split(D)[0])


def realize_features(s, F, G, D, noise=0.1):
    """Feature grids of shape (F, G*G, D).

    The agent cell carries the agent signature plus smaller codes for the
    cause action and the lane (so an attention-weighted sum still identifies
    them); other cells carry uniform noise of amplitude ``noise`` on the object
    channels.  The trailing ego channels hold the ego-action code in every cell.
    """
    if min(F, G, D) < 1:
        raise ValueError("F, G and D must be >= 1")
    n_obj, n_ego = channel_split(D)
    L = G * G
    frames = np.zeros((F, L, D))
    if noise > 0 and n_obj:
        rng = SplitMix64(mix64(_NOISE_STREAM ^ (s.seed & ((1 << 64) - 1))))
        frames[:, :, :n_obj] = rng.uniform_array((F, L, n_obj), -noise, noise)
    cell = location_cell(s.location, G)
    obj = (agent_signature(s.cause_agent, D)
           + 0.3 * _signature(_ACTION_STREAM, CAUSE_ACTIONS.index(s.cause_action), n_obj)
           + 0.3 * _signature(_LOCATION_STREAM, LOCATIONS.index(s.location), n_obj))
    frames[:, cell, :n_obj] = obj
    if n_ego:
        frames[:, :, n_obj:] = _signature(_EGO_STREAM, EGO_ACTIONS.index(s.ego_action), n_ego)
    return np.round(frames, 6)


def _ramp(F):
    return np.linspace(0.0, 1.0, F) if F > 1 else np.ones(1)


def _triangle(F):
    peak = (F - 1) // 2
    t = np.arange(F, dtype=np.float64)
    up = t / peak if peak else np.ones(F)
    down = (F - 1 - t) / (F - 1 - peak) if F - 1 > peak else np.ones(F)
    return np.where(t <= peak, up, down)


def realize_controls(s, F):
    """Piecewise-linear (acceleration, course change) profile per frame."""
    if F < 1:
        raise ValueError("F must be >= 1")
    accel = np.zeros(F)
    course = np.zeros(F)
    target = {"stopping": -2.0, "accelerating": 2.0, "slowing": -1.0}.get(s.ego_action)
    if target is not None:
        accel = target * _ramp(F)
    elif s.ego_action == "turning-left":
        course = 15.0 * _triangle(F)
    elif s.ego_action == "turning-right":
        course = -15.0 * _triangle(F)
    return np.stack([accel, course], axis=1) + 0.0


def make_clip(seed, F=8, G=4, D=16, max_len=DEFAULT_MAX_LEN, noise=0.1):
    s = sample_scenario(seed)
    return Clip(f"clip{seed:08d}", realize_features(s, F, G, D, noise),
                realize_controls(s, F), realize_caption(s, max_len))


def split_sizes(n, ratios):
    """floor(n * ratio) per split; the remainder goes to train."""
    if n <= 0:
        raise ValueError("dataset size must be positive")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three nonnegative fractions summing to 1, got {ratios}")
    sizes = [math.floor(n * r) for r in ratios]
    sizes[0] += n - sum(sizes)
    return tuple(sizes)


def build_dataset(n, ratios=DEFAULT_RATIOS, seed=0, F=8, G=4, D=16,
                  max_len=DEFAULT_MAX_LEN, noise=0.1):
    sizes = split_sizes(n, ratios)
    clips = [make_clip(seed + i, F, G, D, max_len, noise) for i in range(n)]
    order = SplitMix64(seed).permutation(n)
    shuffled = [clips[i] for i in order]
    a, b = sizes[0], sizes[0] + sizes[1]
    return DatasetSplits(shuffled[:a], shuffled[a:b], shuffled[b:], tuple(ratios))


def write_dataset(out_dir, splits, manifest):
    os.makedirs(out_dir, exist_ok=True)
    for name, clips in zip(SPLIT_NAMES, splits):
        with open(os.path.join(out_dir, f"{name}.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
            for clip in clips:
                fh.write(clip.to_json() + "\n")
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def synthesize(out_dir, n, seed=0, F=8, G=4, D=16, max_len=DEFAULT_MAX_LEN,
               ratios=DEFAULT_RATIOS, noise=0.1):
    splits = build_dataset(n, ratios, seed, F, G, D, max_len, noise)
    manifest = {"n": n, "F": F, "G": G, "D": D, "max_len": max_len, "seed": seed,
                "ratios": list(ratios), "noise": noise}
    write_dataset(out_dir, splits, manifest)
    return splits, manifest


def load_dataset(data_dir):
    """Read ``manifest.json`` and the three split files written by :func:`synthesize`."""
    with open(os.path.join(data_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    parts = []
    for name in SPLIT_NAMES:
        with open(os.path.join(data_dir, f"{name}.jsonl"), encoding="utf-8") as fh:
            parts.append([Clip.from_json(line, manifest["max_len"]) for line in fh if line.strip()])
    return DatasetSplits(*parts, ratios=tuple(manifest["ratios"])), manifest
