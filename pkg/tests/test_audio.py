import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avbench.audio import (
    AudioTrack,
    analyze_track,
    decode_wav,
    encode_wav,
    energy_profile,
    silence_histogram,
    trim_leading_silence,
)
from avbench.errors import (
    EmptyTrack,
    MalformedRiff,
    TruncatedData,
    UnknownSample,
    UnsupportedEncoding,
)
from avbench.manifest import Manifest, SampleRecord, fakeavceleb_taxonomy

from .conftest import make_tone_track, write_float32_wav, write_stereo_pcm16


class TestDecodeWav:
    def test_header_arithmetic(self, tmp_path):
        track = AudioTrack(16000, 1, np.zeros(16000))
        path = tmp_path / "a.wav"
        encode_wav(track, path)
        decoded = decode_wav(path)
        assert decoded.sample_rate == 16000
        assert decoded.duration_ms == 1000
        assert len(decoded.samples) == 16000

    def test_full_scale_normalization(self, tmp_path):
        track = AudioTrack(16000, 1, np.full(64, 32767 / 32768))
        path = tmp_path / "full.wav"
        encode_wav(track, path)
        decoded = decode_wav(path)
        assert np.all(decoded.samples == 32767 / 32768)

    def test_stereo_mean_downmix(self, tmp_path):
        path = tmp_path / "stereo.wav"
        write_stereo_pcm16(path, np.full(128, 0.5), np.full(128, -0.5))
        decoded = decode_wav(path)
        assert decoded.channels == 2
        assert np.allclose(decoded.samples, 0.0, atol=1 / 32768)

    def test_float32_decoding(self, tmp_path):
        track = make_tone_track(rate=48000, tone_ms=100)
        path = tmp_path / "f32.wav"
        write_float32_wav(track, path)
        decoded = decode_wav(path)
        assert decoded.sample_rate == 48000
        assert np.allclose(decoded.samples, track.samples, atol=1e-7)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"OGGS" + b"\x00" * 64)
        with pytest.raises(MalformedRiff):
            decode_wav(path)

    def test_truncated_data_chunk(self, tmp_path):
        path = tmp_path / "trunc.wav"
        encode_wav(AudioTrack(16000, 1, np.zeros(1000)), path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 500])
        with pytest.raises(TruncatedData):
            decode_wav(path)

    def test_unsupported_codec(self, tmp_path):
        path = tmp_path / "ulaw.wav"
        payload = b"\x00" * 100
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI",
            b"RIFF", 36 + len(payload), b"WAVE",
            b"fmt ", 16, 7, 1, 8000, 8000, 1, 8,
            b"data", len(payload),
        )
        path.write_bytes(header + payload)
        with pytest.raises(UnsupportedEncoding):
            decode_wav(path)

    def test_too_many_channels(self, tmp_path):
        path = tmp_path / "quad.wav"
        payload = b"\x00" * 96
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI",
            b"RIFF", 36 + len(payload), b"WAVE",
            b"fmt ", 16, 1, 4, 16000, 16000 * 8, 8, 16,
            b"data", len(payload),
        )
        path.write_bytes(header + payload)
        with pytest.raises(UnsupportedEncoding):
            decode_wav(path)

    @given(
        pcm=st.lists(st.integers(min_value=-32768, max_value=32767), min_size=1, max_size=2000),
        rate=st.sampled_from([16000, 48000]),
    )
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_bit_exact(self, pcm, rate, tmp_path_factory):
        track = AudioTrack(rate, 1, np.array(pcm, dtype=np.float64) / 32768.0)
        path = tmp_path_factory.mktemp("rt") / "x.wav"
        encode_wav(track, path)
        assert decode_wav(path) == track


class TestEnergyProfile:
    def test_all_zero_floor(self):
        profile = energy_profile(AudioTrack(16000, 1, np.zeros(16000)))
        assert np.all(profile.rms_db == -200.0)

    def test_full_scale(self):
        profile = energy_profile(AudioTrack(16000, 1, np.ones(16000)))
        assert np.all(profile.rms_db == 0.0)

    def test_tenth_scale(self):
        profile = energy_profile(AudioTrack(16000, 1, np.full(16000, 0.1)))
        assert np.all(np.abs(profile.rms_db + 20.0) < 1e-9)

    def test_window_count(self):
        # 1000 ms at window 10 / hop 5 -> (1000-10)/5 + 1 = 199
        profile = energy_profile(AudioTrack(16000, 1, np.zeros(16000)))
        assert profile.n_windows == 199

    def test_short_track_single_window(self):
        profile = energy_profile(AudioTrack(16000, 1, np.ones(80)))  # 5 ms
        assert profile.n_windows == 1

    def test_empty_track(self):
        with pytest.raises(EmptyTrack):
            energy_profile(AudioTrack(16000, 1, np.zeros(0)))


class TestDetectLeadingSilence:
    def test_tone_from_start(self):
        report = analyze_track(make_tone_track(silence_ms=0))
        assert report.leading_silence_ms == 0
        assert not report.exceeds_min

    def test_all_silent_reports_full_duration(self):
        report = analyze_track(AudioTrack(16000, 1, np.zeros(8000)))
        assert report.leading_silence_ms == 500
        assert report.exceeds_min

    def test_planted_100ms(self):
        report = analyze_track(make_tone_track(silence_ms=100, tone_ms=1000))
        assert 95 <= report.leading_silence_ms <= 105

    def test_below_min_reports_zero(self):
        report = analyze_track(make_tone_track(silence_ms=10, tone_ms=500))
        assert report.leading_silence_ms == 0
        assert not report.exceeds_min

    def test_absolute_mode(self):
        # -46 dB tone: silent under the absolute -20 dBFS cutoff, loud relative to itself
        quiet = make_tone_track(silence_ms=0, tone_ms=500, amp=0.005)
        assert analyze_track(quiet, mode="relative").leading_silence_ms == 0
        report = analyze_track(quiet, mode="absolute")
        assert report.leading_silence_ms == quiet.duration_ms

    @pytest.mark.parametrize("gain", [1.0, 0.5, 0.1, 0.01])
    def test_scale_invariance(self, gain):
        track = make_tone_track(silence_ms=100, tone_ms=1000)
        scaled = AudioTrack(track.sample_rate, 1, track.samples * gain)
        assert (
            analyze_track(scaled).leading_silence_ms
            == analyze_track(track).leading_silence_ms
        )

    @pytest.mark.parametrize("k", [40, 100, 335])
    def test_concatenation_monotonicity(self, k):
        base = make_tone_track(silence_ms=0, tone_ms=800)
        before = analyze_track(base).leading_silence_ms
        extended = AudioTrack(
            base.sample_rate,
            1,
            np.concatenate([np.zeros(round(base.sample_rate * k / 1000)), base.samples]),
        )
        after = analyze_track(extended).leading_silence_ms
        assert abs(after - (before + k)) <= 5  # one hop


class TestTrim:
    def test_noop_when_zero(self):
        track = make_tone_track(silence_ms=0)
        report = analyze_track(track)
        assert trim_leading_silence(track, report) == track

    def test_fixture_duration(self):
        track = make_tone_track(silence_ms=100, tone_ms=1000)
        report = analyze_track(track)
        trimmed = trim_leading_silence(track, report)
        assert abs(trimmed.duration_ms - (track.duration_ms - report.leading_silence_ms)) <= 5

    def test_all_silent_degenerates(self):
        track = AudioTrack(16000, 1, np.zeros(4000))
        report = analyze_track(track)
        trimmed = trim_leading_silence(track, report)
        assert len(trimmed.samples) == 0
        assert analyze_track(trimmed).leading_silence_ms < 20

    @pytest.mark.parametrize("silence_ms", [0, 30, 100, 250])
    @pytest.mark.parametrize("rate", [16000, 48000])
    def test_roundtrip_leaves_under_min(self, silence_ms, rate):
        track = make_tone_track(rate=rate, silence_ms=silence_ms, tone_ms=600)
        trimmed = trim_leading_silence(track, analyze_track(track))
        assert analyze_track(trimmed).leading_silence_ms < 20


def _histogram_manifest(entries):
    taxonomy = fakeavceleb_taxonomy()
    records = [
        SampleRecord.build(
            sample_id=sid,
            dataset=taxonomy.dataset,
            source_identity="id0000",
            video_methods=methods,
            audio_method=audio,
        )
        for sid, methods, audio in entries
    ]
    return Manifest(taxonomy=taxonomy, records=records)


def _report(sid, ms):
    from avbench.audio import SilenceReport

    return SilenceReport(sample_id=sid, leading_silence_ms=ms, duration_ms=10_000)


class TestSilenceHistogram:
    def test_single_report_binning(self):
        manifest = _histogram_manifest([("a", (), None)])
        hist = silence_histogram([_report("a", 50)], manifest, bin_width_ms=20, group_by="label")
        assert hist.counts["real"][2] == 1

    def test_empty_reports(self):
        manifest = _histogram_manifest([("a", (), None)])
        hist = silence_histogram([], manifest, bin_width_ms=20)
        assert hist.counts == {}
        assert hist.rows() == []

    def test_half_open_bins(self):
        manifest = _histogram_manifest([(s, (), None) for s in "abc"])
        reports = [_report("a", 0), _report("b", 19), _report("c", 21)]
        hist = silence_histogram(reports, manifest, bin_width_ms=20, group_by="label")
        assert hist.counts["real"][0] == 2
        assert hist.counts["real"][1] == 1

    def test_group_by_manipulation(self):
        manifest = _histogram_manifest(
            [("a", (), None), ("b", ("Wav2Lip",), "SV2TTS"), ("c", ("Wav2Lip",), "SV2TTS")]
        )
        reports = [_report("a", 0), _report("b", 100), _report("c", 110)]
        hist = silence_histogram(reports, manifest, bin_width_ms=20)
        assert hist.counts["Real"][0] == 1
        assert hist.counts["Wav2Lip+SV2TTS"][5] == 2
        assert sum(hist.counts["Wav2Lip+SV2TTS"].values()) == 2

    def test_unknown_sample(self):
        manifest = _histogram_manifest([("a", (), None)])
        with pytest.raises(UnknownSample):
            silence_histogram([_report("zzz", 5)], manifest)
