"""WAV decoding, windowed energy profiles, and leading-silence analysis.

The silence rule: a window counts as silent when its RMS level sits more than
``threshold_db`` below the loudest window of the track (relative mode, the
default) or below ``-threshold_db`` dBFS (absolute mode), and a leading
silence is only reported when it lasts at least ``min_ms``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyTrack,
    MalformedRiff,
    TruncatedData,
    UnknownSample,
    UnsupportedEncoding,
)

RMS_FLOOR = 1e-10
FLOOR_DB = 20.0 * np.log10(RMS_FLOOR)  # -200 dB, digital silence

_FMT_PCM = 0x0001
_FMT_IEEE_FLOAT = 0x0003
_FMT_EXTENSIBLE = 0xFFFE


@dataclass(eq=False)
class AudioTrack:
    """Decoded mono audio, samples normalized to [-1, 1]."""

    sample_rate: int
    channels: int
    samples: np.ndarray

    @property
    def duration_ms(self) -> int:
        return round(1000 * len(self.samples) / self.sample_rate)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AudioTrack):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.channels == other.channels
            and np.array_equal(self.samples, other.samples)
        )


@dataclass
class EnergyProfile:
    window_ms: int
    hop_ms: int
    duration_ms: int
    rms_db: np.ndarray

    @property
    def n_windows(self) -> int:
        return len(self.rms_db)


@dataclass
class SilenceReport:
    sample_id: str
    leading_silence_ms: float
    duration_ms: int
    threshold_db: float = 20.0
    min_ms: float = 20.0

    @property
    def exceeds_min(self) -> bool:
        return self.leading_silence_ms >= self.min_ms


@dataclass
class SilenceHistogram:
    bin_width_ms: float
    group_by: str
    # group -> bin index -> count
    counts: dict = field(default_factory=dict)

    def add(self, group: str, leading_silence_ms: float) -> None:
        bin_idx = int(leading_silence_ms // self.bin_width_ms)
        bins = self.counts.setdefault(group, {})
        bins[bin_idx] = bins.get(bin_idx, 0) + 1

    def rows(self) -> list[tuple[str, float, int]]:
        """(group, bin_start_ms, count) rows in stable order."""
        out = []
        for group in sorted(self.counts):
            for bin_idx in sorted(self.counts[group]):
                out.append((group, bin_idx * self.bin_width_ms, self.counts[group][bin_idx]))
        return out


def _read_exact(data: bytes, offset: int, n: int, what: str) -> bytes:
    if offset + n > len(data):
        raise MalformedRiff(f"file too short while reading {what}")
    return data[offset : offset + n]


def decode_wav(path: str | Path) -> AudioTrack:
    """Decode a RIFF/WAVE file (PCM 16-bit or IEEE float 32-bit, 1-2 channels).

    Stereo is downmixed to mono by channel mean; 16-bit samples are scaled by
    1/32768 so 0x7FFF maps just below full scale.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedRiff(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    declared_data_size = None
    offset = 12
    while offset + 8 <= len(data):
        chunk_id = data[offset : offset + 4]
        (chunk_size,) = struct.unpack_from("<I", data, offset + 4)
        body_start = offset + 8
        if chunk_id == b"fmt ":
            body = _read_exact(data, body_start, min(chunk_size, 16), "fmt chunk")
            if chunk_size < 16:
                raise MalformedRiff(f"{path}: fmt chunk too small ({chunk_size} bytes)")
            fmt = struct.unpack("<HHIIHH", body)
        elif chunk_id == b"data":
            declared_data_size = chunk_size
            payload = data[body_start : body_start + chunk_size]
        # chunks are word-aligned
        offset = body_start + chunk_size + (chunk_size & 1)

    if fmt is None or payload is None:
        raise MalformedRiff(f"{path}: missing fmt or data chunk")

    audio_format, channels, sample_rate, _byte_rate, block_align, bits = fmt
    if audio_format == _FMT_EXTENSIBLE:
        raise UnsupportedEncoding(f"{path}: WAVE_FORMAT_EXTENSIBLE is not supported")
    if (audio_format, bits) not in ((_FMT_PCM, 16), (_FMT_IEEE_FLOAT, 32)):
        raise UnsupportedEncoding(
            f"{path}: format tag {audio_format} at {bits} bits (need PCM16 or float32)"
        )
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{path}: {channels} channels (need mono or stereo)")
    if sample_rate <= 0 or block_align != channels * bits // 8:
        raise MalformedRiff(f"{path}: inconsistent fmt chunk")

    if len(payload) < declared_data_size:
        raise TruncatedData(
            f"{path}: data chunk declares {declared_data_size} bytes, found {len(payload)}"
        )
    if declared_data_size % block_align != 0:
        raise TruncatedData(f"{path}: data chunk ends mid-frame")

    if audio_format == _FMT_PCM:
        raw = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    else:
        raw = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        raw = np.clip(raw, -1.0, 1.0)
    if channels == 2:
        raw = raw.reshape(-1, 2).mean(axis=1)
    return AudioTrack(sample_rate=sample_rate, channels=channels, samples=raw)


def encode_wav(track: AudioTrack, path: str | Path) -> None:
    """Write a track as mono 16-bit PCM. Inverse of decode_wav on PCM16 fixtures."""
    pcm = np.clip(np.round(track.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        _FMT_PCM,
        1,
        track.sample_rate,
        track.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    Path(path).write_bytes(header + payload)


def energy_profile(track: AudioTrack, window_ms: int = 10, hop_ms: int = 5) -> EnergyProfile:
    """Windowed RMS levels in dBFS, epsilon-floored before the log."""
    if window_ms < hop_ms or hop_ms <= 0:
        raise ValueError("need window_ms >= hop_ms > 0")
    n = len(track.samples)
    if n == 0:
        raise EmptyTrack("track has no samples")

    window = round(track.sample_rate * window_ms / 1000)
    hop = round(track.sample_rate * hop_ms / 1000)
    if n < window:
        # single window, zero-padded to full length
        padded = np.zeros(window)
        padded[:n] = track.samples
        rms = np.sqrt(np.mean(padded**2, keepdims=True))
    else:
        views = np.lib.stride_tricks.sliding_window_view(track.samples, window)[::hop]
        rms = np.sqrt(np.einsum("ij,ij->i", views, views) / window)
    rms_db = 20.0 * np.log10(np.maximum(rms, RMS_FLOOR))
    return EnergyProfile(
        window_ms=window_ms, hop_ms=hop_ms, duration_ms=track.duration_ms, rms_db=rms_db
    )


def detect_leading_silence(
    profile: EnergyProfile,
    threshold_db: float = 20.0,
    min_ms: float = 20.0,
    mode: str = "relative",
    sample_id: str = "",
) -> SilenceReport:
    """Locate the first non-silent window and report the leading silence.

    In relative mode a window is silent when it sits ``threshold_db`` below the
    loudest window; windows at the digital-silence floor always count as
    silent, so an all-zero track reports its full duration. Leading silences
    shorter than ``min_ms`` are reported as 0.
    """
    if mode == "relative":
        cutoff = profile.rms_db.max() - threshold_db
        silent = (profile.rms_db < cutoff) | (profile.rms_db <= FLOOR_DB)
    elif mode == "absolute":
        silent = profile.rms_db < -threshold_db
    else:
        raise ValueError(f"unknown silence mode {mode!r}")

    live = np.flatnonzero(~silent)
    if len(live) == 0:
        raw = float(profile.duration_ms)
    else:
        raw = float(live[0] * profile.hop_ms)
    reported = raw if raw >= min_ms else 0.0
    return SilenceReport(
        sample_id=sample_id,
        leading_silence_ms=reported,
        duration_ms=profile.duration_ms,
        threshold_db=threshold_db,
        min_ms=min_ms,
    )


def analyze_track(
    track: AudioTrack,
    window_ms: int = 10,
    hop_ms: int = 5,
    threshold_db: float = 20.0,
    min_ms: float = 20.0,
    mode: str = "relative",
    sample_id: str = "",
) -> SilenceReport:
    """detect_leading_silence over a freshly computed profile.

    Empty tracks (e.g. a fully trimmed all-silent input) report 0 ms.
    """
    if len(track.samples) == 0:
        return SilenceReport(
            sample_id=sample_id,
            leading_silence_ms=0.0,
            duration_ms=0,
            threshold_db=threshold_db,
            min_ms=min_ms,
        )
    profile = energy_profile(track, window_ms=window_ms, hop_ms=hop_ms)
    return detect_leading_silence(
        profile, threshold_db=threshold_db, min_ms=min_ms, mode=mode, sample_id=sample_id
    )


def trim_leading_silence(track: AudioTrack, report: SilenceReport) -> AudioTrack:
    """Drop the reported leading silence from the start of the track."""
    n_remove = round(report.leading_silence_ms * track.sample_rate / 1000)
    return AudioTrack(
        sample_rate=track.sample_rate,
        channels=track.channels,
        samples=track.samples[n_remove:],
    )


def silence_histogram(
    reports: list[SilenceReport],
    manifest,
    bin_width_ms: float = 20.0,
    group_by: str = "manipulation",
) -> SilenceHistogram:
    """Bin leading silences per group; groups come from the manifest records.

    group_by "manipulation" uses the canonical combo label, "label" splits
    real vs fake. Bins are half-open: [bin*w, (bin+1)*w).
    """
    by_id = {r.sample_id: r for r in manifest.records}
    hist = SilenceHistogram(bin_width_ms=bin_width_ms, group_by=group_by)
    for report in reports:
        record = by_id.get(report.sample_id)
        if record is None:
            raise UnknownSample(f"report for unknown sample {report.sample_id!r}")
        hist.add(group_key(record, group_by), report.leading_silence_ms)
    return hist


def group_key(record, group_by: str) -> str:
    if group_by == "manipulation":
        return record.combo_label()
    if group_by in ("label", "real/fake"):
        return "fake" if (record.video_label == "fake" or record.audio_label == "fake") else "real"
    raise ValueError(f"unknown group_by {group_by!r}")
