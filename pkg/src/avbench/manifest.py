"""Dataset manifests: taxonomy, sample records, ingestion adapters, CSV I/O.

The canonical on-disk form is a CSV with a fixed header plus a JSON sidecar
(`<stem>.meta.json`) carrying the taxonomy and provenance. The extra
`provided_split` column preserves a dataset's own train/test designation so
it survives save/load round trips.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .errors import (
    AnnotationParse,
    CoverageError,
    DuplicateSampleId,
    LayoutMismatch,
    MissingMetadata,
    SchemaVersionMismatch,
    UnknownMethod,
    UnknownMethodFolder,
)

SCHEMA_VERSION = 1

CSV_HEADER = [
    "sample_id",
    "dataset",
    "identity",
    "video_path",
    "audio_path",
    "video_methods",
    "audio_method",
    "n_frames",
    "fps",
    "duration_ms",
    "provided_split",
]

LIP_SYNTHESIS = "LipSynthesis"
FACE_ANIMATION = "FaceAnimation"

_MEDIA_EXTENSIONS = {".mp4", ".avi", ".mov", ".mkv", ".wav"}


@dataclass(frozen=True)
class MethodId:
    name: str
    modality: str  # video | audio


@dataclass(frozen=True)
class Combo:
    """One manipulation combination: the video method set plus the audio method."""

    video_methods: frozenset
    audio_method: str | None

    @property
    def is_real(self) -> bool:
        return not self.video_methods and self.audio_method is None

    @property
    def methods(self) -> frozenset:
        extra = {self.audio_method} if self.audio_method else set()
        return frozenset(self.video_methods | extra)

    def label(self) -> str:
        video = "+".join(sorted(self.video_methods)) if self.video_methods else "RealVideo"
        audio = self.audio_method if self.audio_method else "RealAudio"
        return f"{video}+{audio}"


def combo(video_methods=(), audio_method=None) -> Combo:
    return Combo(frozenset(video_methods), audio_method)


@dataclass(frozen=True)
class Taxonomy:
    dataset: str
    video_families: dict  # method name -> family
    audio_methods: tuple
    fake_combos: tuple  # legal fake combinations for this dataset

    @property
    def video_methods(self) -> tuple:
        return tuple(self.video_families)

    def family_of(self, method: str) -> str:
        return self.video_families[method]

    def methods_of_family(self, family: str) -> set:
        return {m for m, f in self.video_families.items() if f == family}

    def knows(self, method: str) -> bool:
        return method in self.video_families or method in self.audio_methods

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "video_methods": dict(self.video_families),
            "audio_methods": list(self.audio_methods),
            "fake_combos": [
                {"video": sorted(c.video_methods), "audio": c.audio_method}
                for c in self.fake_combos
            ],
        }

    @staticmethod
    def from_json(obj: dict) -> "Taxonomy":
        return Taxonomy(
            dataset=obj["dataset"],
            video_families=dict(obj["video_methods"]),
            audio_methods=tuple(obj["audio_methods"]),
            fake_combos=tuple(
                combo(c["video"], c["audio"]) for c in obj["fake_combos"]
            ),
        )


def fakeavceleb_taxonomy() -> Taxonomy:
    return Taxonomy(
        dataset="fakeavceleb",
        video_families={
            "Wav2Lip": LIP_SYNTHESIS,
            "FaceSwap": FACE_ANIMATION,
            "FSGAN": FACE_ANIMATION,
        },
        audio_methods=("SV2TTS",),
        fake_combos=(
            combo((), "SV2TTS"),
            combo(("Wav2Lip",)),
            combo(("Wav2Lip",), "SV2TTS"),
            combo(("FaceSwap",)),
            combo(("FaceSwap", "Wav2Lip"), "SV2TTS"),
            combo(("FSGAN",)),
            combo(("FSGAN", "Wav2Lip"), "SV2TTS"),
        ),
    )


def deepspeak_taxonomy() -> Taxonomy:
    return Taxonomy(
        dataset="deepspeak_v1",
        video_families={
            "Wav2Lip": LIP_SYNTHESIS,
            "Retalking": LIP_SYNTHESIS,
            "FaceFusion": FACE_ANIMATION,
            "FaceFusionGAN": FACE_ANIMATION,
            "FaceFusionLive": FACE_ANIMATION,
        },
        audio_methods=("ElevenLabs",),
        fake_combos=(
            combo(("Wav2Lip",)),
            combo(("Wav2Lip",), "ElevenLabs"),
            combo(("Retalking",)),
            combo(("Retalking",), "ElevenLabs"),
            combo(("FaceFusion",)),
            combo(("FaceFusionGAN",)),
            combo(("FaceFusionLive",)),
        ),
    )


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    dataset: str
    source_identity: str
    video_methods: frozenset
    audio_method: str | None
    video_label: str
    audio_label: str
    video_path: str = ""
    audio_path: str = ""
    n_frames: int | None = None
    fps: float | None = None
    duration_ms: int | None = None
    provided_split: str | None = None

    @staticmethod
    def build(sample_id, dataset, source_identity, video_methods=(), audio_method=None, **kw):
        """Construct a record with labels derived from the method fields."""
        methods = frozenset(video_methods)
        return SampleRecord(
            sample_id=sample_id,
            dataset=dataset,
            source_identity=source_identity,
            video_methods=methods,
            audio_method=audio_method,
            video_label="fake" if methods else "real",
            audio_label="fake" if audio_method else "real",
            **kw,
        )

    def combo(self) -> Combo:
        return Combo(self.video_methods, self.audio_method)

    def combo_label(self) -> str:
        c = self.combo()
        return "Real" if c.is_real else c.label()

    @property
    def is_fake(self) -> bool:
        return bool(self.video_methods) or self.audio_method is not None


@dataclass
class Manifest:
    taxonomy: Taxonomy
    records: list
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self._by_id = {r.sample_id: r for r in self.records}
        if len(self._by_id) != len(self.records):
            raise DuplicateSampleId("manifest contains duplicated sample_ids")

    def record(self, sample_id: str) -> SampleRecord:
        return self._by_id[sample_id]

    def has(self, sample_id: str) -> bool:
        return sample_id in self._by_id

    def identities(self) -> dict:
        """identity -> list of sample_ids, in record order."""
        out: dict = {}
        for r in self.records:
            out.setdefault(r.source_identity, []).append(r.sample_id)
        return out

    def subset(self, sample_ids) -> "Manifest":
        wanted = set(sample_ids)
        return Manifest(
            taxonomy=self.taxonomy,
            records=[r for r in self.records if r.sample_id in wanted],
            provenance=dict(self.provenance),
        )


@dataclass(frozen=True)
class Issue:
    code: str
    sample_id: str
    message: str
    severity: str = "error"


def _provenance(root: str) -> dict:
    # SOURCE_DATE_EPOCH keeps ingestion byte-reproducible when callers need it
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    ts = int(epoch) if epoch else int(time.time())
    return {"root": root, "ingested_at": ts, "tool_version": __version__}


_FAVC_CATEGORIES = {
    "realvideo-realaudio": (False, False),
    "realvideo-fakeaudio": (False, True),
    "fakevideo-realaudio": (True, False),
    "fakevideo-fakeaudio": (True, True),
}

_FAVC_VIDEO_TOKENS = {
    "wav2lip": "Wav2Lip",
    "wavtolip": "Wav2Lip",
    "faceswap": "FaceSwap",
    "fsgan": "FSGAN",
}


def _favc_identity(parts) -> str | None:
    for part in parts:
        if part.lower().startswith("id") and part[2:].isdigit():
            return part
    return None


def ingest_fakeavceleb(root: str | Path) -> Manifest:
    """Scan the four-category FakeAVCeleb directory layout into a manifest."""
    root = Path(root)
    taxonomy = fakeavceleb_taxonomy()
    categories = {}
    for child in root.iterdir() if root.is_dir() else ():
        key = child.name.lower()
        if child.is_dir() and key in _FAVC_CATEGORIES:
            categories[key] = child
    missing = sorted(set(_FAVC_CATEGORIES) - set(categories))
    if missing:
        raise LayoutMismatch(f"{root}: missing category folders: {', '.join(missing)}")

    records = []
    for key, cat_dir in sorted(categories.items()):
        fake_video, fake_audio = _FAVC_CATEGORIES[key]
        for path in sorted(cat_dir.rglob("*")):
            if not path.is_file() or path.suffix.lower() not in _MEDIA_EXTENSIONS:
                continue
            rel = path.relative_to(root)
            identity = _favc_identity(rel.parts)
            if identity is None:
                raise LayoutMismatch(f"{rel}: no id-labelled path component")
            haystack = "/".join(rel.parts).lower()
            video_methods = {m for tok, m in _FAVC_VIDEO_TOKENS.items() if tok in haystack}
            if fake_video and not video_methods:
                raise UnknownMethodFolder(f"{rel}: no recognized manipulation folder")
            if not fake_video:
                video_methods = set()
            records.append(
                SampleRecord.build(
                    sample_id=rel.as_posix(),
                    dataset=taxonomy.dataset,
                    source_identity=identity,
                    video_methods=video_methods,
                    audio_method="SV2TTS" if fake_audio else None,
                    video_path=str(path),
                    audio_path=_sibling_audio(path),
                    duration_ms=_probe_wav_ms(path),
                )
            )
    records.sort(key=lambda r: r.sample_id)
    manifest = Manifest(taxonomy=taxonomy, records=records, provenance=_provenance(str(root)))
    _fail_on_issues(manifest)
    return manifest


_DS_VIDEO_ALIASES = {
    "wav2lip": "Wav2Lip",
    "retalking": "Retalking",
    "video_retalking": "Retalking",
    "facefusion": "FaceFusion",
    "facefusion_gan": "FaceFusionGAN",
    "facefusiongan": "FaceFusionGAN",
    "facefusion_live": "FaceFusionLive",
    "facefusionlive": "FaceFusionLive",
}

_DS_AUDIO_ALIASES = {"elevenlabs": "ElevenLabs"}


def ingest_deepspeak(root: str | Path, metadata: str | Path | None = None) -> Manifest:
    """Build a DeepSpeak v1 manifest from its annotation CSV.

    Expected columns: file, split, identity, video_method, audio_method;
    optional n_frames, fps, duration_ms. The split column is kept verbatim as
    the record's provided_split.
    """
    root = Path(root)
    meta_path = Path(metadata) if metadata else root / "annotations.csv"
    if not meta_path.is_file():
        raise MissingMetadata(f"annotation file not found: {meta_path}")

    taxonomy = deepspeak_taxonomy()
    records = []
    with open(meta_path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"file", "split", "identity", "video_method", "audio_method"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise AnnotationParse(f"{meta_path}: missing columns {required}")
        for lineno, row in enumerate(reader, start=2):
            video_raw = (row["video_method"] or "").strip().lower()
            audio_raw = (row["audio_method"] or "").strip().lower()
            if video_raw in ("", "none", "real"):
                video_methods = ()
            elif video_raw in _DS_VIDEO_ALIASES:
                video_methods = (_DS_VIDEO_ALIASES[video_raw],)
            else:
                raise AnnotationParse(f"{meta_path}:{lineno}: unknown video method {video_raw!r}")
            if audio_raw in ("", "none", "real"):
                audio_method = None
            elif audio_raw in _DS_AUDIO_ALIASES:
                audio_method = _DS_AUDIO_ALIASES[audio_raw]
            else:
                raise AnnotationParse(f"{meta_path}:{lineno}: unknown audio method {audio_raw!r}")
            split = (row["split"] or "").strip().lower()
            if split not in ("train", "test"):
                raise AnnotationParse(f"{meta_path}:{lineno}: split must be train/test")
            path = root / row["file"]
            records.append(
                SampleRecord.build(
                    sample_id=row["file"],
                    dataset=taxonomy.dataset,
                    source_identity=row["identity"].strip(),
                    video_methods=video_methods,
                    audio_method=audio_method,
                    video_path=str(path),
                    audio_path=_sibling_audio(path),
                    n_frames=_opt_int(row.get("n_frames")),
                    fps=_opt_float(row.get("fps")),
                    duration_ms=_opt_int(row.get("duration_ms")) or _probe_wav_ms(path),
                    provided_split=split,
                )
            )
    records.sort(key=lambda r: r.sample_id)
    manifest = Manifest(taxonomy=taxonomy, records=records, provenance=_provenance(str(root)))
    _fail_on_issues(manifest)
    return manifest


def _sibling_audio(path: Path) -> str:
    if path.suffix.lower() == ".wav":
        return str(path)
    candidate = path.with_suffix(".wav")
    return str(candidate) if candidate.is_file() else str(path)


def _probe_wav_ms(path: Path) -> int | None:
    if path.suffix.lower() != ".wav" or not path.is_file():
        return None
    try:
        from .audio import decode_wav

        return decode_wav(path).duration_ms
    except Exception:
        return None


def _opt_int(value) -> int | None:
    return int(value) if value not in (None, "") else None


def _opt_float(value) -> float | None:
    return float(value) if value not in (None, "") else None


def _fail_on_issues(manifest: Manifest) -> None:
    issues = validate_manifest(manifest)
    if issues:
        head = "; ".join(f"{i.sample_id}: {i.message}" for i in issues[:5])
        raise CoverageError(f"ingestion produced {len(issues)} issue(s): {head}")


def validate_manifest(manifest: Manifest, check_files: bool = False) -> list:
    """Issue list: taxonomy violations, combo restrictions, label derivation,
    optionally missing media files. Issues are data, not exceptions."""
    taxonomy = manifest.taxonomy
    legal = set(taxonomy.fake_combos) | {combo()}
    issues = []
    for r in manifest.records:
        unknown = [m for m in sorted(r.video_methods) if m not in taxonomy.video_families]
        if r.audio_method and r.audio_method not in taxonomy.audio_methods:
            unknown.append(r.audio_method)
        if unknown:
            issues.append(
                Issue("unknown-method", r.sample_id, f"method(s) not in taxonomy: {', '.join(unknown)}")
            )
            continue
        expected_video = "fake" if r.video_methods else "real"
        expected_audio = "fake" if r.audio_method else "real"
        if r.video_label != expected_video or r.audio_label != expected_audio:
            issues.append(
                Issue(
                    "label-derivation",
                    r.sample_id,
                    f"labels ({r.video_label},{r.audio_label}) do not match methods",
                )
            )
        if r.combo() not in legal:
            families = {taxonomy.family_of(m) for m in r.video_methods}
            if r.audio_method and FACE_ANIMATION in families:
                msg = "audio manipulation on face-animation sample"
            else:
                msg = f"combination {r.combo().label()} not in taxonomy inventory"
            issues.append(Issue("combo-restriction", r.sample_id, msg))
        if not r.source_identity:
            issues.append(Issue("missing-identity", r.sample_id, "record has no source identity"))
        if check_files:
            for kind, p in (("video", r.video_path), ("audio", r.audio_path)):
                if p and not Path(p).is_file():
                    issues.append(
                        Issue("missing-file", r.sample_id, f"{kind} file not found: {p}", "warning")
                    )
    return issues


def _meta_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".meta.json")


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in manifest.records:
            writer.writerow(
                [
                    r.sample_id,
                    r.dataset,
                    r.source_identity,
                    r.video_path,
                    r.audio_path,
                    ";".join(sorted(r.video_methods)),
                    r.audio_method or "",
                    "" if r.n_frames is None else r.n_frames,
                    "" if r.fps is None else r.fps,
                    "" if r.duration_ms is None else r.duration_ms,
                    r.provided_split or "",
                ]
            )
    meta = {
        "schema_version": SCHEMA_VERSION,
        "taxonomy": manifest.taxonomy.to_json(),
        "provenance": manifest.provenance,
    }
    _meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    meta_path = _meta_path(path)
    if not meta_path.is_file():
        raise MissingMetadata(f"manifest sidecar not found: {meta_path}")
    meta = json.loads(meta_path.read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"{meta_path}: schema_version {meta.get('schema_version')} != {SCHEMA_VERSION}"
        )
    taxonomy = Taxonomy.from_json(meta["taxonomy"])

    records = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != CSV_HEADER:
            raise SchemaVersionMismatch(f"{path}: unexpected manifest header")
        for row in reader:
            sid = row["sample_id"]
            if sid in seen:
                raise DuplicateSampleId(f"{path}: duplicated sample_id {sid!r}")
            seen.add(sid)
            methods = [m for m in row["video_methods"].split(";") if m]
            audio_method = row["audio_method"] or None
            for m in methods:
                if m not in taxonomy.video_families:
                    raise UnknownMethod(f"{path}: unknown video method {m!r} on {sid}")
            if audio_method and audio_method not in taxonomy.audio_methods:
                raise UnknownMethod(f"{path}: unknown audio method {audio_method!r} on {sid}")
            records.append(
                SampleRecord.build(
                    sample_id=sid,
                    dataset=row["dataset"],
                    source_identity=row["identity"],
                    video_methods=methods,
                    audio_method=audio_method,
                    video_path=row["video_path"],
                    audio_path=row["audio_path"],
                    n_frames=_opt_int(row["n_frames"]),
                    fps=_opt_float(row["fps"]),
                    duration_ms=_opt_int(row["duration_ms"]),
                    provided_split=row["provided_split"] or None,
                )
            )
    return Manifest(taxonomy=taxonomy, records=records, provenance=meta.get("provenance", {}))


def with_condition(manifest: Manifest, condition: str) -> Manifest:
    """Copy of the manifest tagged with an evaluation condition (e.g. trimmed)."""
    provenance = dict(manifest.provenance)
    provenance["condition"] = condition
    return Manifest(taxonomy=manifest.taxonomy, records=list(manifest.records), provenance=provenance)


def retarget_audio(manifest: Manifest, mapping: dict) -> Manifest:
    """Replace audio paths per sample_id (used after writing trimmed copies)."""
    records = [
        replace(r, audio_path=mapping.get(r.sample_id, r.audio_path)) for r in manifest.records
    ]
    return Manifest(taxonomy=manifest.taxonomy, records=records, provenance=dict(manifest.provenance))
