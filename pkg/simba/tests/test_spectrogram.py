import numpy as np
import pytest

from simba_toy.spectrogram import (
    SpectrogramConfig,
    log_mel,
    mel_filterbank,
    norm_stats,
    normalize,
)


def test_output_shape():
    samples = np.random.default_rng(0).standard_normal(16000) * 0.1
    spec = log_mel(samples, 16000)
    # 1 + (16000 - 321) // 160 frames of 64 mel bins
    assert spec.shape == (1 + (16000 - 321) // 160, 64)
    assert spec.dtype == np.float32


def test_short_input_pads_to_one_frame():
    spec = log_mel(np.zeros(10), 16000)
    assert spec.shape == (1, 64)
    assert np.isfinite(spec).all()


def test_hop_config():
    samples = np.zeros(16000)
    wide = log_mel(samples, 16000, SpectrogramConfig(hop=320))
    narrow = log_mel(samples, 16000, SpectrogramConfig(hop=160))
    assert wide.shape[0] < narrow.shape[0]


def test_filterbank_covers_all_mels():
    bank = mel_filterbank(16000, 321, 64)
    assert bank.shape == (64, 161)
    assert (bank.sum(axis=1) > 0).all()
    assert (bank >= 0).all()


def test_tone_lands_in_matching_mel_bin():
    rate = 16000
    t = np.arange(rate) / rate
    tone = 0.5 * np.sin(2 * np.pi * 2000.0 * t)
    spec_tone = log_mel(tone, rate)
    spec_noise = log_mel(np.random.default_rng(1).standard_normal(rate) * 0.01, rate)
    hot = spec_tone.mean(axis=0).argmax()
    assert spec_tone.mean(axis=0)[hot] > spec_noise.mean(axis=0)[hot] + 3.0


def test_normalization_stats_near_zero_one():
    rng = np.random.default_rng(3)
    specs = [log_mel(rng.standard_normal(8000) * 0.2, 16000) for _ in range(10)]
    mean, std = norm_stats(specs)
    normalized = [normalize(s, mean, std) for s in specs]
    pooled = np.concatenate([n.reshape(-1) for n in normalized])
    assert abs(pooled.mean()) < 1e-6
    assert pooled.std() == pytest.approx(1.0, abs=1e-3)
