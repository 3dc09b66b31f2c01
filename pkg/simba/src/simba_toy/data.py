"""Toy dataset generation and harness file-format adapters.

The generator plants a bright spatial patch on fake-video samples and a pure
tone on fake-audio samples (optionally a leading silence instead, for
shortcut experiments), then writes WAVs, frame tensors, and a manifest CSV in
the harness schema so every downstream step runs through the harness files.
"""

from __future__ import annotations

import csv
import json
import subprocess
import sys
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MANIFEST_HEADER = [
    "sample_id", "dataset", "identity", "video_path", "audio_path",
    "video_methods", "audio_method", "n_frames", "fps", "duration_ms",
    "provided_split",
]

VIDEO_METHOD = "PatchSynth"
AUDIO_METHOD = "ToneVoice"
COMBO_LABELS = [
    "Real",
    f"{VIDEO_METHOD}+RealAudio",
    f"RealVideo+{AUDIO_METHOD}",
    f"{VIDEO_METHOD}+{AUDIO_METHOD}",
]


@dataclass
class ToySpec:
    n_train: int = 64
    n_test: int = 32
    n_frames: int = 16
    frame_size: int = 64
    fps: float = 25.0
    sample_rate: int = 16000
    audio_seconds: float | None = None  # default: n_frames / fps
    video_artifact: bool = True
    audio_artifact: bool = True
    leading_silence_ms: float = 0.0  # planted on fake-audio samples
    tone_hz: float = 2000.0
    tone_amp: float = 0.3
    n_identities: int = 8
    kinds: tuple = ("real", "video", "audio", "both")
    seed: int = 0


def _write_wav(path: Path, samples: np.ndarray, rate: int) -> None:
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as out:
        out.setnchannels(1)
        out.setsampwidth(2)
        out.setframerate(rate)
        out.writeframes(pcm.tobytes())


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    with wave.open(str(path), "rb") as src:
        rate = src.getframerate()
        raw = src.readframes(src.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def generate_toy_dataset(root: str | Path, spec: ToySpec = ToySpec()) -> Path:
    """Write the dataset plus a harness-schema manifest; returns the CSV path."""
    root = Path(root)
    (root / "media").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    seconds = spec.audio_seconds or spec.n_frames / spec.fps
    n_audio = round(seconds * spec.sample_rate)

    rows = []
    total = spec.n_train + spec.n_test
    for i in range(total):
        kind = spec.kinds[i % len(spec.kinds)]
        split = "train" if i < spec.n_train else "test"
        sid = f"toy{i:04d}"
        identity = f"tid{(i // len(spec.kinds)) % spec.n_identities:03d}"
        fake_video = kind in ("video", "both")
        fake_audio = kind in ("audio", "both")

        frames = rng.integers(60, 196, size=(spec.n_frames, spec.frame_size, spec.frame_size, 3),
                              dtype=np.uint8)
        if fake_video and spec.video_artifact:
            frames[:, 4:24, 4:24, :] = 250
        video_path = root / "media" / f"{sid}.npy"
        np.save(video_path, frames)

        audio = 0.05 * rng.standard_normal(n_audio)
        if fake_audio and spec.audio_artifact:
            t = np.arange(n_audio) / spec.sample_rate
            audio = audio + spec.tone_amp * np.sin(2 * np.pi * spec.tone_hz * t)
        if fake_audio and spec.leading_silence_ms > 0:
            n_sil = round(spec.leading_silence_ms * spec.sample_rate / 1000)
            audio[:n_sil] = 0.0
        audio_path = root / "media" / f"{sid}.wav"
        _write_wav(audio_path, np.clip(audio, -1, 1), spec.sample_rate)

        rows.append({
            "sample_id": sid,
            "dataset": "toy",
            "identity": identity,
            "video_path": str(video_path),
            "audio_path": str(audio_path),
            "video_methods": VIDEO_METHOD if fake_video else "",
            "audio_method": AUDIO_METHOD if fake_audio else "",
            "n_frames": spec.n_frames,
            "fps": spec.fps,
            "duration_ms": round(1000 * n_audio / spec.sample_rate),
            "provided_split": split,
        })

    manifest_path = root / "manifest.csv"
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_HEADER)
        writer.writeheader()
        writer.writerows(rows)
    meta = {
        "schema_version": 1,
        "taxonomy": {
            "dataset": "toy",
            "video_methods": {VIDEO_METHOD: "FaceAnimation"},
            "audio_methods": [AUDIO_METHOD],
            "fake_combos": [
                {"video": [VIDEO_METHOD], "audio": None},
                {"video": [], "audio": AUDIO_METHOD},
                {"video": [VIDEO_METHOD], "audio": AUDIO_METHOD},
            ],
        },
        "provenance": {"root": str(root), "ingested_at": 0, "tool_version": "simba-toy"},
    }
    manifest_path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return manifest_path


def strip_audio_tone(manifest_path: str | Path, out_root: str | Path) -> Path:
    """Copy of a manifest whose fake-audio WAVs are regenerated without the
    tone (labels unchanged): the ablation probe for modality attribution."""
    out_root = Path(out_root)
    (out_root / "media").mkdir(parents=True, exist_ok=True)
    records = read_manifest(manifest_path)
    rng = np.random.default_rng(1234)
    rows = []
    for rec in records:
        row = dict(rec.raw)
        if rec.audio_method:
            samples, rate = read_wav(rec.audio_path)
            clean = 0.05 * rng.standard_normal(len(samples))
            new_path = out_root / "media" / f"{rec.sample_id}.wav"
            _write_wav(new_path, np.clip(clean, -1, 1), rate)
            row["audio_path"] = str(new_path)
        rows.append(row)
    out_csv = out_root / "manifest.csv"
    with open(out_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_HEADER)
        writer.writeheader()
        writer.writerows(rows)
    src_meta = Path(manifest_path).with_suffix(".meta.json")
    out_csv.with_suffix(".meta.json").write_text(src_meta.read_text())
    return out_csv


@dataclass
class Record:
    sample_id: str
    identity: str
    video_path: str
    audio_path: str
    video_methods: list
    audio_method: str | None
    n_frames: int
    fps: float
    raw: dict

    @property
    def video_fake(self) -> bool:
        return bool(self.video_methods)

    @property
    def audio_fake(self) -> bool:
        return self.audio_method is not None

    @property
    def sample_fake(self) -> bool:
        return self.video_fake or self.audio_fake

    def combo_label(self) -> str:
        if not self.sample_fake:
            return "Real"
        video = "+".join(sorted(self.video_methods)) if self.video_methods else "RealVideo"
        audio = self.audio_method or "RealAudio"
        return f"{video}+{audio}"


def read_manifest(path: str | Path) -> list:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                Record(
                    sample_id=row["sample_id"],
                    identity=row["identity"],
                    video_path=row["video_path"],
                    audio_path=row["audio_path"],
                    video_methods=[m for m in row["video_methods"].split(";") if m],
                    audio_method=row["audio_method"] or None,
                    n_frames=int(row["n_frames"]),
                    fps=float(row["fps"]),
                    raw=dict(row),
                )
            )
    return records


def combo_classes(manifest_path: str | Path) -> list:
    """Class inventory for the multiclass head: real first, then the taxonomy
    combos in sidecar order."""
    meta = json.loads(Path(manifest_path).with_suffix(".meta.json").read_text())
    labels = ["Real"]
    for c in meta["taxonomy"]["fake_combos"]:
        video = "+".join(sorted(c["video"])) if c["video"] else "RealVideo"
        audio = c["audio"] or "RealAudio"
        labels.append(f"{video}+{audio}")
    return labels


def read_plans(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    return {p["sample_id"]: p["clips"] for p in doc["plans"]}


def avbench_command() -> list:
    """Locate the harness CLI; fall back to module execution."""
    import shutil

    exe = shutil.which("avbench")
    if exe:
        return [exe]
    return [sys.executable, "-m", "avbench.cli"]


def run_avbench(args: list) -> subprocess.CompletedProcess:
    proc = subprocess.run(
        avbench_command() + [str(a) for a in args], capture_output=True, text=True
    )
    if proc.returncode != 0:
        raise RuntimeError(
            f"avbench {' '.join(str(a) for a in args)} failed "
            f"(exit {proc.returncode}): {proc.stderr.strip()}"
        )
    return proc


def make_plans(manifest_path, out_path, n_frames, step, strategy, seed, jitter=False) -> dict:
    args = [
        "sample", "plan", "--manifest", manifest_path, "--n", n_frames, "--step", step,
        "--strategy", strategy, "--seed", seed, "--out", out_path,
    ]
    if jitter:
        args.insert(2, "--jitter")
    run_avbench(args)
    return read_plans(out_path)
