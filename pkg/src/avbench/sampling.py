"""Deterministic frame-index clip plans for training and evaluation.

A clip takes N frames at step M (span N*M frames for tiling purposes);
training may jitter the start uniformly, evaluation tiles non-overlapping
clips capped at five per video. Indices past the end repeat the last frame
and are flagged as padding.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyScores, UsageError

MAX_CLIPS = 5


@dataclass(frozen=True)
class SamplingConfig:
    n_frames: int = 16
    step: int = 5
    jitter: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 1 or self.step < 1:
            raise UsageError("n_frames and step must be >= 1")

    @property
    def span(self) -> int:
        return self.n_frames * self.step


@dataclass
class Clip:
    indices: list
    padded: list  # parallel bools, True where the index was substituted

    def to_json(self) -> dict:
        return {"indices": self.indices, "padded": self.padded}


@dataclass
class SamplingPlan:
    sample_id: str
    strategy: str  # training | beginning | clips_mean | clips_max
    clips: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "strategy": self.strategy,
            "clips": [c.to_json() for c in self.clips],
        }


def _clip_from(start: int, total_frames: int, config: SamplingConfig) -> Clip:
    indices, padded = [], []
    for i in range(config.n_frames):
        idx = start + i * config.step
        if idx >= total_frames:
            indices.append(total_frames - 1)
            padded.append(True)
        else:
            indices.append(idx)
            padded.append(False)
    return Clip(indices=indices, padded=padded)


def training_clip(total_frames: int, config: SamplingConfig, rng: random.Random) -> Clip:
    """One training clip; jitter draws the start uniformly from [0, T - N*M]."""
    if total_frames < 1:
        raise UsageError("total_frames must be >= 1")
    start = rng.randint(0, max(0, total_frames - config.span)) if config.jitter else 0
    return _clip_from(start, total_frames, config)


def eval_plan(total_frames: int, config: SamplingConfig, strategy: str,
              max_clips: int = MAX_CLIPS, sample_id: str = "") -> SamplingPlan:
    """Evaluation clips: one from the beginning, or tiled non-overlapping spans."""
    if total_frames < 1:
        raise UsageError("total_frames must be >= 1")
    if strategy == "beginning":
        clips = [_clip_from(0, total_frames, config)]
    elif strategy in ("clips_mean", "clips_max"):
        n_clips = max(1, min(max_clips, total_frames // config.span))
        clips = [_clip_from(c * config.span, total_frames, config) for c in range(n_clips)]
    else:
        raise UsageError(f"unknown evaluation strategy {strategy!r}")
    return SamplingPlan(sample_id=sample_id, strategy=strategy, clips=clips)


def aggregate(clip_scores, mode: str) -> float:
    if not clip_scores:
        raise EmptyScores("no clip scores to aggregate")
    if mode == "mean":
        return sum(clip_scores) / len(clip_scores)
    if mode == "max":
        return max(clip_scores)
    raise UsageError(f"unknown aggregation mode {mode!r}")


def sample_rng(seed: int, sample_id: str) -> random.Random:
    """Per-sample RNG split: stable across runs and platforms."""
    digest = hashlib.sha256(f"{seed}:{sample_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def plan_manifest(manifest, config: SamplingConfig, strategy: str,
                  max_clips: int = MAX_CLIPS) -> list:
    """One plan per manifest record (requires n_frames on every record)."""
    missing = [r.sample_id for r in manifest.records if r.n_frames is None]
    if missing:
        raise UsageError(
            f"{len(missing)} record(s) lack n_frames (e.g. {missing[0]!r}); "
            "probe the media or fill the column first"
        )
    plans = []
    for r in sorted(manifest.records, key=lambda r: r.sample_id):
        if strategy == "training":
            rng = sample_rng(config.seed, r.sample_id)
            clip = training_clip(r.n_frames, config, rng)
            plans.append(SamplingPlan(sample_id=r.sample_id, strategy="training", clips=[clip]))
        else:
            plans.append(
                eval_plan(r.n_frames, config, strategy, max_clips=max_clips, sample_id=r.sample_id)
            )
    return plans


def save_plans(plans: list, config: SamplingConfig, strategy: str, path: str | Path) -> None:
    doc = {
        "schema_version": 1,
        "config": {
            "n_frames": config.n_frames,
            "step": config.step,
            "jitter": config.jitter,
            "seed": config.seed,
        },
        "strategy": strategy,
        "plans": [p.to_json() for p in plans],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_plans(path: str | Path):
    """-> (config, strategy, {sample_id: SamplingPlan})."""
    doc = json.loads(Path(path).read_text())
    cfg = doc["config"]
    config = SamplingConfig(
        n_frames=cfg["n_frames"], step=cfg["step"], jitter=cfg["jitter"], seed=cfg["seed"]
    )
    plans = {}
    for p in doc["plans"]:
        plans[p["sample_id"]] = SamplingPlan(
            sample_id=p["sample_id"],
            strategy=p["strategy"],
            clips=[Clip(indices=c["indices"], padded=c["padded"]) for c in p["clips"]],
        )
    return config, doc["strategy"], plans
