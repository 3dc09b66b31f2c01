"""Shared fixtures: synthetic WAV builders and miniature dataset manifests."""

from __future__ import annotations

import struct
import sys

import numpy as np
import pytest

from avbench.audio import AudioTrack, encode_wav
from avbench.manifest import (
    Manifest,
    SampleRecord,
    combo,
    deepspeak_taxonomy,
    fakeavceleb_taxonomy,
)


def make_tone_track(rate=16000, silence_ms=0, tone_ms=1000, amp=0.5, freq=440.0) -> AudioTrack:
    """Digital silence followed by a sine tone."""
    n_sil = round(rate * silence_ms / 1000)
    n_tone = round(rate * tone_ms / 1000)
    t = np.arange(n_tone) / rate
    samples = np.concatenate([np.zeros(n_sil), amp * np.sin(2 * np.pi * freq * t)])
    return AudioTrack(sample_rate=rate, channels=1, samples=samples)


def write_float32_wav(track: AudioTrack, path) -> None:
    payload = track.samples.astype("<f4").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 3, 1, track.sample_rate, track.sample_rate * 4, 4, 32,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header + payload)


def write_stereo_pcm16(path, left: np.ndarray, right: np.ndarray, rate=16000) -> None:
    frames = np.empty(2 * len(left), dtype="<i2")
    frames[0::2] = np.clip(np.round(left * 32768.0), -32768, 32767).astype("<i2")
    frames[1::2] = np.clip(np.round(right * 32768.0), -32768, 32767).astype("<i2")
    payload = frames.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 2, rate, rate * 4, 4, 16,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header + payload)


FAVC_FAKE_COMBOS = (
    combo((), "SV2TTS"),
    combo(("Wav2Lip",)),
    combo(("Wav2Lip",), "SV2TTS"),
    combo(("FaceSwap",)),
    combo(("FaceSwap", "Wav2Lip"), "SV2TTS"),
    combo(("FSGAN",)),
    combo(("FSGAN", "Wav2Lip"), "SV2TTS"),
)

DS_FAKE_COMBOS = (
    combo(("Wav2Lip",)),
    combo(("Wav2Lip",), "ElevenLabs"),
    combo(("Retalking",)),
    combo(("Retalking",), "ElevenLabs"),
    combo(("FaceFusion",)),
    combo(("FaceFusionGAN",)),
    combo(("FaceFusionLive",)),
)


def mini_favc_manifest(n_identities=12, samples_per_combo=1) -> Manifest:
    """Synthetic FakeAVCeleb manifest: every identity carries one real sample
    plus every fake combo."""
    taxonomy = fakeavceleb_taxonomy()
    records = []
    for i in range(n_identities):
        ident = f"id{i:04d}"
        for k in range(samples_per_combo):
            records.append(
                SampleRecord.build(
                    sample_id=f"{ident}_real_{k}",
                    dataset=taxonomy.dataset,
                    source_identity=ident,
                    n_frames=200,
                    fps=25.0,
                )
            )
            for j, c in enumerate(FAVC_FAKE_COMBOS):
                records.append(
                    SampleRecord.build(
                        sample_id=f"{ident}_fake{j}_{k}",
                        dataset=taxonomy.dataset,
                        source_identity=ident,
                        video_methods=c.video_methods,
                        audio_method=c.audio_method,
                        n_frames=200,
                        fps=25.0,
                    )
                )
    return Manifest(taxonomy=taxonomy, records=records)


def mini_deepspeak_manifest(n_train_identities=8, n_test_identities=4) -> Manifest:
    taxonomy = deepspeak_taxonomy()
    records = []
    for i in range(n_train_identities + n_test_identities):
        ident = f"spk{i:03d}"
        split = "train" if i < n_train_identities else "test"
        records.append(
            SampleRecord.build(
                sample_id=f"{ident}_real",
                dataset=taxonomy.dataset,
                source_identity=ident,
                provided_split=split,
                n_frames=200,
                fps=25.0,
            )
        )
        for j, c in enumerate(DS_FAKE_COMBOS):
            records.append(
                SampleRecord.build(
                    sample_id=f"{ident}_fake{j}",
                    dataset=taxonomy.dataset,
                    source_identity=ident,
                    video_methods=c.video_methods,
                    audio_method=c.audio_method,
                    provided_split=split,
                    n_frames=200,
                    fps=25.0,
                )
            )
    return Manifest(taxonomy=taxonomy, records=records)


def uniform_manifest(n_identities=50, samples_per_identity=4) -> Manifest:
    """Identical identity sizes; fake/real alternates so tests have both."""
    taxonomy = fakeavceleb_taxonomy()
    records = []
    for i in range(n_identities):
        ident = f"id{i:04d}"
        for k in range(samples_per_identity):
            fake = k % 2 == 1
            records.append(
                SampleRecord.build(
                    sample_id=f"{ident}_{k}",
                    dataset=taxonomy.dataset,
                    source_identity=ident,
                    video_methods=("Wav2Lip",) if fake else (),
                    n_frames=100,
                    fps=25.0,
                )
            )
    return Manifest(taxonomy=taxonomy, records=records)


# --- independent metric oracles ---

def pairwise_auc(labels, scores) -> float:
    """Brute-force Mann-Whitney: every positive/negative pair, ties half."""
    pos = [s for l, s in zip(labels, scores) if l == 1]
    neg = [s for l, s in zip(labels, scores) if l == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def staircase_ap(labels, scores) -> float:
    """Precision/recall staircase cut at every distinct score threshold."""
    n_pos = sum(labels)
    ap = 0.0
    prev_recall = 0.0
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for l, s in zip(labels, scores) if l == 1 and s >= t)
        kept = sum(1 for s in scores if s >= t)
        recall = tp / n_pos
        ap += (recall - prev_recall) * (tp / kept)
        prev_recall = recall
    return ap


def scores_with_auc(n_pos: int, n_neg: int, pairs_won: int):
    """Labels/scores whose pairwise AUC is exactly pairs_won/(n_pos*n_neg).

    Negatives sit at 0..n_neg-1 (scaled); positives start above them all and
    are pushed below k negatives each until the loss budget is spent.
    """
    losses = n_pos * n_neg - pairs_won
    assert 0 <= losses <= n_pos * n_neg
    neg_scores = [float(i) for i in range(n_neg)]
    pos_scores = []
    for _ in range(n_pos):
        k = min(losses, n_neg)  # this positive loses to k negatives
        losses -= k
        # score strictly between neg[n_neg-k-1] and neg[n_neg-k]
        pos_scores.append(n_neg - k - 0.5)
    assert losses == 0
    labels = [1] * n_pos + [0] * n_neg
    return labels, pos_scores + neg_scores


def audio_backed_manifest(root, n_identities=3, fake_audio_silence_ms=100):
    """mini_favc_manifest with real WAVs on disk; fake-audio samples carry a
    planted leading silence, everything else starts at full energy."""
    import dataclasses

    from avbench.manifest import Manifest as M

    base = mini_favc_manifest(n_identities)
    root.mkdir(parents=True, exist_ok=True)
    records = []
    for r in base.records:
        silence = fake_audio_silence_ms if r.audio_method else 0
        track = make_tone_track(silence_ms=silence, tone_ms=400)
        path = root / f"{r.sample_id}.wav"
        encode_wav(track, path)
        records.append(
            dataclasses.replace(
                r, audio_path=str(path), video_path=str(path), duration_ms=track.duration_ms
            )
        )
    return M(taxonomy=base.taxonomy, records=records)


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        name = report.nodeid.split("::")[-1]
        sys.stderr.write(f"\n[{status}] {name}\n")


@pytest.fixture
def favc_manifest():
    return mini_favc_manifest()


@pytest.fixture
def deepspeak_manifest():
    return mini_deepspeak_manifest()
