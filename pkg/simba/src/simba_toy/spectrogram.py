"""Log-mel spectrogram frontend.

FFT size 321 and 64 mel bins; the hop is configurable (default 160 samples,
10 ms at 16 kHz). Values are log-compressed and normalized with a scalar
mean/std computed over the training set's spectrograms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpectrogramConfig:
    n_fft: int = 321
    n_mels: int = 64
    hop: int = 160
    log_floor: float = 1e-8


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """Triangular mel filters over the rfft bins, shape [n_mels, n_fft//2+1]."""
    n_bins = n_fft // 2 + 1
    freqs = np.linspace(0.0, sample_rate / 2.0, n_bins)
    mel_points = np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_points = _mel_to_hz(mel_points)
    bank = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, mid, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (freqs - lo) / max(mid - lo, 1e-9)
        down = (hi - freqs) / max(hi - mid, 1e-9)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def log_mel(samples: np.ndarray, sample_rate: int, config: SpectrogramConfig = SpectrogramConfig()) -> np.ndarray:
    """[F, n_mels] log-mel frames; short inputs are zero-padded to one frame."""
    x = np.asarray(samples, dtype=np.float64)
    if len(x) < config.n_fft:
        x = np.pad(x, (0, config.n_fft - len(x)))
    n_frames = 1 + (len(x) - config.n_fft) // config.hop
    window = np.hanning(config.n_fft)
    starts = np.arange(n_frames) * config.hop
    frames = x[starts[:, None] + np.arange(config.n_fft)[None, :]] * window
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    bank = mel_filterbank(sample_rate, config.n_fft, config.n_mels)
    mel = power @ bank.T
    return np.log(np.maximum(mel, config.log_floor)).astype(np.float32)


def norm_stats(spectrograms) -> tuple[float, float]:
    """Scalar mean/std pooled over all frames of the given spectrograms."""
    stacked = np.concatenate([np.asarray(s, dtype=np.float64).reshape(-1) for s in spectrograms])
    return float(stacked.mean()), float(stacked.std() + 1e-8)


def normalize(spec: np.ndarray, mean: float, std: float) -> np.ndarray:
    return ((spec - mean) / std).astype(np.float32)
