import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avbench.audio import AudioTrack, encode_wav
from avbench.errors import (
    AnnotationParse,
    DuplicateSampleId,
    LayoutMismatch,
    MissingMetadata,
    SchemaVersionMismatch,
    UnknownMethod,
    UnknownMethodFolder,
)
from avbench.manifest import (
    Manifest,
    SampleRecord,
    deepspeak_taxonomy,
    fakeavceleb_taxonomy,
    ingest_deepspeak,
    ingest_fakeavceleb,
    load_manifest,
    save_manifest,
    validate_manifest,
)

from .conftest import mini_favc_manifest

FAVC_CATEGORIES = (
    "RealVideo-RealAudio",
    "RealVideo-FakeAudio",
    "FakeVideo-RealAudio",
    "FakeVideo-FakeAudio",
)


def _touch_wav(path):
    path.parent.mkdir(parents=True, exist_ok=True)
    encode_wav(AudioTrack(16000, 1, np.zeros(160)), path)


def make_favc_tree(root):
    """Two identities across all four categories with method-labelled names."""
    files = [
        "RealVideo-RealAudio/id0001/00001.wav",
        "RealVideo-RealAudio/id0002/00002.wav",
        "RealVideo-FakeAudio/id0001/00001-id0003.wav",
        "FakeVideo-RealAudio/wav2lip/id0001/00001_wav2lip.wav",
        "FakeVideo-RealAudio/faceswap/id0002/00002_faceswap.wav",
        "FakeVideo-RealAudio/fsgan/id0002/00002_fsgan.wav",
        "FakeVideo-FakeAudio/wav2lip/id0001/00001_wav2lip.wav",
        "FakeVideo-FakeAudio/faceswap-wav2lip/id0001/00001_faceswap_wav2lip.wav",
        "FakeVideo-FakeAudio/fsgan-wav2lip/id0002/00002_fsgan_wav2lip.wav",
    ]
    for rel in files:
        _touch_wav(root / rel)
    return files


class TestIngestFakeAVCeleb:
    def test_layout_parsing(self, tmp_path):
        make_favc_tree(tmp_path)
        manifest = ingest_fakeavceleb(tmp_path)
        assert len(manifest.records) == 9
        by_id = {r.sample_id: r for r in manifest.records}

        ff = by_id["FakeVideo-FakeAudio/wav2lip/id0001/00001_wav2lip.wav"]
        assert ff.video_methods == {"Wav2Lip"}
        assert ff.audio_method == "SV2TTS"
        assert ff.source_identity == "id0001"

        rv = by_id["RealVideo-FakeAudio/id0001/00001-id0003.wav"]
        assert rv.video_methods == set()
        assert rv.audio_method == "SV2TTS"
        assert rv.video_label == "real"

        combo_rec = by_id["FakeVideo-FakeAudio/faceswap-wav2lip/id0001/00001_faceswap_wav2lip.wav"]
        assert combo_rec.video_methods == {"FaceSwap", "Wav2Lip"}

    def test_duration_probed_from_wav(self, tmp_path):
        make_favc_tree(tmp_path)
        manifest = ingest_fakeavceleb(tmp_path)
        assert all(r.duration_ms == 10 for r in manifest.records)

    def test_missing_category_folder(self, tmp_path):
        (tmp_path / "RealVideo-RealAudio" / "id0001").mkdir(parents=True)
        with pytest.raises(LayoutMismatch):
            ingest_fakeavceleb(tmp_path)

    def test_unknown_method_folder(self, tmp_path):
        make_favc_tree(tmp_path)
        _touch_wav(tmp_path / "FakeVideo-RealAudio/deepmagic/id0001/x.wav")
        with pytest.raises(UnknownMethodFolder):
            ingest_fakeavceleb(tmp_path)

    def test_determinism(self, tmp_path):
        make_favc_tree(tmp_path)
        assert ingest_fakeavceleb(tmp_path) == ingest_fakeavceleb(tmp_path)

    def test_ingested_manifest_validates_clean(self, tmp_path):
        make_favc_tree(tmp_path)
        manifest = ingest_fakeavceleb(tmp_path)
        assert validate_manifest(manifest, check_files=True) == []


DS_ANNOTATIONS = """file,split,identity,video_method,audio_method,n_frames,fps
real/a.wav,train,spk01,none,none,200,25
real/b.wav,test,spk02,none,none,200,25
fakes/ff_live.wav,train,spk01,facefusion_live,none,200,25
fakes/rt.wav,test,spk02,retalking,elevenlabs,200,25
fakes/w2l.wav,train,spk01,wav2lip,elevenlabs,200,25
"""


class TestIngestDeepspeak:
    def _write(self, tmp_path, text=DS_ANNOTATIONS):
        (tmp_path / "annotations.csv").write_text(text)
        for rel in ("real/a.wav", "real/b.wav", "fakes/ff_live.wav", "fakes/rt.wav", "fakes/w2l.wav"):
            _touch_wav(tmp_path / rel)

    def test_face_animation_keeps_real_audio(self, tmp_path):
        self._write(tmp_path)
        manifest = ingest_deepspeak(tmp_path)
        rec = manifest.record("fakes/ff_live.wav")
        assert rec.video_methods == {"FaceFusionLive"}
        assert rec.audio_method is None
        assert rec.provided_split == "train"

    def test_retalking_with_cloned_voice(self, tmp_path):
        self._write(tmp_path)
        rec = ingest_deepspeak(tmp_path).record("fakes/rt.wav")
        assert rec.video_methods == {"Retalking"}
        assert rec.audio_method == "ElevenLabs"
        assert rec.provided_split == "test"

    def test_missing_metadata(self, tmp_path):
        with pytest.raises(MissingMetadata):
            ingest_deepspeak(tmp_path)

    def test_annotation_parse_error(self, tmp_path):
        self._write(tmp_path, DS_ANNOTATIONS + "fakes/x.wav,train,spk01,hologram,none,1,1\n")
        with pytest.raises(AnnotationParse):
            ingest_deepspeak(tmp_path)

    def test_bad_split_value(self, tmp_path):
        self._write(tmp_path, DS_ANNOTATIONS + "fakes/x.wav,dev,spk01,none,none,1,1\n")
        with pytest.raises(AnnotationParse):
            ingest_deepspeak(tmp_path)


class TestManifestIO:
    def test_roundtrip_value_equality(self, tmp_path, favc_manifest):
        path = tmp_path / "m.csv"
        save_manifest(favc_manifest, path)
        assert load_manifest(path) == favc_manifest

    def test_roundtrip_preserves_provided_split(self, tmp_path):
        from .conftest import mini_deepspeak_manifest

        manifest = mini_deepspeak_manifest()
        path = tmp_path / "ds.csv"
        save_manifest(manifest, path)
        loaded = load_manifest(path)
        assert loaded == manifest
        assert loaded.records[0].provided_split in ("train", "test")

    def test_duplicate_sample_id(self, tmp_path, favc_manifest):
        path = tmp_path / "m.csv"
        save_manifest(favc_manifest, path)
        lines = path.read_text().splitlines()
        lines.append(lines[1])
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DuplicateSampleId):
            load_manifest(path)

    def test_unknown_method_names_offender(self, tmp_path, favc_manifest):
        path = tmp_path / "m.csv"
        save_manifest(favc_manifest, path)
        text = path.read_text().replace("Wav2Lip", "WavToLip9000", 1)
        path.write_text(text)
        with pytest.raises(UnknownMethod) as err:
            load_manifest(path)
        assert "WavToLip9000" in str(err.value)

    def test_schema_version_mismatch(self, tmp_path, favc_manifest):
        path = tmp_path / "m.csv"
        save_manifest(favc_manifest, path)
        meta = path.with_suffix(".meta.json")
        meta.write_text(meta.read_text().replace('"schema_version": 1', '"schema_version": 99'))
        with pytest.raises(SchemaVersionMismatch):
            load_manifest(path)


class TestValidate:
    def test_clean_miniature(self, favc_manifest):
        assert validate_manifest(favc_manifest) == []

    def test_audio_on_face_animation(self):
        taxonomy = deepspeak_taxonomy()
        record = SampleRecord.build(
            "bad", taxonomy.dataset, "spk01",
            video_methods=("FaceFusion",), audio_method="ElevenLabs",
        )
        manifest = Manifest(taxonomy=taxonomy, records=[record])
        issues = validate_manifest(manifest)
        assert len(issues) == 1
        assert issues[0].message == "audio manipulation on face-animation sample"

    def test_label_derivation_issue(self):
        taxonomy = fakeavceleb_taxonomy()
        record = SampleRecord(
            sample_id="x", dataset=taxonomy.dataset, source_identity="id0001",
            video_methods=frozenset(), audio_method=None,
            video_label="fake", audio_label="real",
        )
        manifest = Manifest(taxonomy=taxonomy, records=[record])
        issues = validate_manifest(manifest)
        assert any(i.code == "label-derivation" for i in issues)

    def test_missing_files_flagged(self, favc_manifest):
        issues = validate_manifest(favc_manifest, check_files=False)
        assert issues == []
        # records point nowhere, so file checking flags them
        manifest = mini_favc_manifest(2)
        with_paths = Manifest(
            taxonomy=manifest.taxonomy,
            records=[
                type(r)(**{**vars(r), "audio_path": "/nonexistent/x.wav"})
                for r in manifest.records
            ],
        )
        issues = validate_manifest(with_paths, check_files=True)
        assert issues and all(i.code == "missing-file" for i in issues)


@given(
    methods=st.sets(st.sampled_from(["Wav2Lip", "FaceSwap", "FSGAN"]), max_size=2),
    fake_audio=st.booleans(),
)
@settings(max_examples=100, deadline=None)
def test_label_derivation_is_pure(methods, fake_audio):
    record = SampleRecord.build(
        "s", "fakeavceleb", "id0001",
        video_methods=methods, audio_method="SV2TTS" if fake_audio else None,
    )
    assert record.video_label == ("fake" if methods else "real")
    assert record.audio_label == ("fake" if fake_audio else "real")
    assert record.is_fake == bool(methods or fake_audio)
