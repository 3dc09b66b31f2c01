"""Protocol construction and leakage diagnosis.

Builds standard, method-split, family-split, established leave-one-out, and
cross-dataset protocol instances on top of identity-disjoint assignments, and
diagnoses identity leaks, manipulation leaks (a held-out technique appearing
inside a training combo), and suite-level coverage blind spots.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DistinctDatasetsRequired,
    EmptyTestSet,
    EmptyTrainSet,
    MissingPhaseTag,
    TooFewIdentities,
    UsageError,
)
from .manifest import (
    FACE_ANIMATION,
    Manifest,
    Taxonomy,
    combo,
    load_manifest,
    save_manifest,
)

PHASES = ("train", "val", "test")


@dataclass
class SplitAssignment:
    phase_of: dict
    seed: int
    fractions: tuple

    def ids_in(self, phase: str) -> list:
        return [sid for sid, p in self.phase_of.items() if p == phase]


@dataclass(frozen=True)
class ProtocolSpec:
    kind: str  # standard | method | family | established | cross_dataset
    dataset: str
    param: str | None = None
    seed: int = 0

    def name(self) -> str:
        if self.kind == "standard":
            return "standard"
        if self.kind == "cross_dataset":
            return f"cross-{self.dataset}-to-{self.param}"
        return f"{self.kind}-{self.param}"


@dataclass
class DiagnosisReport:
    identity_leaks: list = field(default_factory=list)
    manipulation_leaks: list = field(default_factory=list)
    coverage_gaps: list = field(default_factory=list)
    shared_manipulation_subset: list = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not (self.identity_leaks or self.manipulation_leaks or self.coverage_gaps)

    def to_json(self) -> dict:
        return {
            "identity_leaks": self.identity_leaks,
            "manipulation_leaks": self.manipulation_leaks,
            "coverage_gaps": self.coverage_gaps,
            "shared_manipulation_subset": self.shared_manipulation_subset,
            "clean": self.is_empty,
        }


@dataclass
class ProtocolInstance:
    spec: ProtocolSpec
    phases: dict  # phase -> list of sample_ids
    inventories: dict  # phase -> sorted list of fake combo labels
    diagnosis: DiagnosisReport | None = None

    @property
    def name(self) -> str:
        return self.spec.name()


def assign_identity_split(manifest: Manifest, fractions=(0.60, 0.10, 0.30), seed: int = 0,
                          phases=PHASES) -> SplitAssignment:
    """Greedy identity-disjoint split approaching the sample-count fractions.

    Identities are shuffled by the seeded RNG, then visited largest-first
    (ties keep the shuffled order); each goes to the phase with the largest
    remaining deficit, so every sample of an identity shares a phase.
    """
    if len(fractions) != len(phases) or abs(sum(fractions) - 1.0) > 1e-9:
        raise UsageError("fractions must match phases and sum to 1")
    identities = manifest.identities()
    if len(identities) < 3:
        raise TooFewIdentities(f"need at least 3 identities, found {len(identities)}")

    order = sorted(identities)
    random.Random(seed).shuffle(order)
    order.sort(key=lambda ident: -len(identities[ident]))

    total = len(manifest.records)
    targets = [f * total for f in fractions]
    counts = [0] * len(phases)
    phase_of = {}
    for ident in order:
        deficits = [targets[i] - counts[i] for i in range(len(phases))]
        best = max(range(len(phases)), key=lambda i: (deficits[i], -i))
        for sid in identities[ident]:
            phase_of[sid] = phases[best]
        counts[best] += len(identities[ident])
    return SplitAssignment(phase_of=phase_of, seed=seed, fractions=tuple(fractions))


def assign_fakeavceleb(manifest: Manifest, fractions=(0.60, 0.10, 0.30), seed: int = 0) -> SplitAssignment:
    return assign_identity_split(manifest, fractions=fractions, seed=seed)


def assign_deepspeak(manifest: Manifest, val_fraction: float = 0.2, seed: int = 0,
                     carve: str = "identity") -> SplitAssignment:
    """Keep the dataset's own test set; carve validation out of its train set.

    The carve is identity-disjoint by default; carve="random" splits at the
    sample level instead.
    """
    untagged = [r.sample_id for r in manifest.records if r.provided_split not in ("train", "test")]
    if untagged:
        raise MissingPhaseTag(f"{len(untagged)} record(s) without train/test designation")

    phase_of = {}
    train_pool = []
    for r in manifest.records:
        if r.provided_split == "test":
            phase_of[r.sample_id] = "test"
        else:
            train_pool.append(r)

    if val_fraction <= 0 or not train_pool:
        for r in train_pool:
            phase_of[r.sample_id] = "train"
    elif carve == "random":
        ids = [r.sample_id for r in train_pool]
        random.Random(seed).shuffle(ids)
        n_val = round(val_fraction * len(ids))
        val = set(ids[:n_val])
        for sid in ids:
            phase_of[sid] = "val" if sid in val else "train"
    elif carve == "identity":
        identities: dict = {}
        for r in train_pool:
            identities.setdefault(r.source_identity, []).append(r.sample_id)
        order = sorted(identities)
        random.Random(seed).shuffle(order)
        order.sort(key=lambda ident: -len(identities[ident]))
        total = len(train_pool)
        targets = [(1 - val_fraction) * total, val_fraction * total]
        counts = [0, 0]
        for ident in order:
            deficits = [targets[i] - counts[i] for i in range(2)]
            best = 0 if deficits[0] >= deficits[1] else 1
            for sid in identities[ident]:
                phase_of[sid] = ("train", "val")[best]
            counts[best] += len(identities[ident])
    else:
        raise UsageError(f"unknown carve mode {carve!r}")
    return SplitAssignment(phase_of=phase_of, seed=seed, fractions=(1 - val_fraction, val_fraction))


def method_groups(taxonomy: Taxonomy) -> dict:
    """Partition the taxonomy's fake combos into method groups.

    A combo joins the group of its face-animation method when it has one
    (FaceSwap+Wav2Lip belongs to FaceSwap), otherwise the group of its lip
    synthesis method; pure audio fakes form their own group.
    """
    groups: dict = {}
    for c in taxonomy.fake_combos:
        fa = sorted(m for m in c.video_methods if taxonomy.family_of(m) == FACE_ANIMATION)
        if fa:
            name = fa[0]
        elif c.video_methods:
            name = sorted(c.video_methods)[0]
        else:
            name = "RealVideo-FakeAudio"
        groups.setdefault(name, []).append(c)
    return groups


# The leave-one-out categorisation used by prior work on FakeAVCeleb. The two
# single-method real-audio combos (FaceSwap, FSGAN) have no category: they are
# dropped from both sides, which is exactly the blind spot diagnose() reports.
ESTABLISHED_CATEGORIES = {
    "RealVideo-FakeAudio": combo((), "SV2TTS"),
    "Wav2Lip-RealAudio": combo(("Wav2Lip",)),
    "FaceSwap-FakeAudio": combo(("FaceSwap", "Wav2Lip"), "SV2TTS"),
    "FSGAN-FakeAudio": combo(("FSGAN", "Wav2Lip"), "SV2TTS"),
    "Wav2Lip-FakeAudio": combo(("Wav2Lip",), "SV2TTS"),
}


def _phase_ids(assignment: SplitAssignment, manifest: Manifest) -> dict:
    phases = {p: [] for p in PHASES}
    for r in manifest.records:
        phase = assignment.phase_of.get(r.sample_id)
        if phase is None:
            raise UsageError(f"sample {r.sample_id!r} not covered by the assignment")
        phases[phase].append(r.sample_id)
    return phases


def _inventory(manifest: Manifest, ids) -> list:
    labels = {manifest.record(sid).combo().label() for sid in ids if manifest.record(sid).is_fake}
    return sorted(labels)


def build_protocol(assignment: SplitAssignment, manifest: Manifest, spec: ProtocolSpec) -> ProtocolInstance:
    """Derive one protocol instance by holding manipulations out of a base split."""
    base = _phase_ids(assignment, manifest)
    taxonomy = manifest.taxonomy

    def rec(sid):
        return manifest.record(sid)

    if spec.kind == "standard":
        keep_train = keep_test = lambda r: True
    elif spec.kind == "method":
        groups = method_groups(taxonomy)
        if spec.param not in groups:
            raise UsageError(f"unknown method group {spec.param!r}")
        held = set(groups[spec.param])
        keep_train = lambda r: r.combo() not in held
        keep_test = lambda r: not r.is_fake or r.combo() in held
    elif spec.kind == "family":
        fam_methods = taxonomy.methods_of_family(spec.param)
        if not fam_methods:
            raise UsageError(f"unknown family {spec.param!r}")
        keep_train = lambda r: not (r.video_methods & fam_methods)
        keep_test = lambda r: not r.is_fake or bool(r.video_methods & fam_methods)
    elif spec.kind == "established":
        if set(ESTABLISHED_CATEGORIES.values()) - set(taxonomy.fake_combos):
            raise UsageError(f"established protocol is not defined for {taxonomy.dataset}")
        if spec.param not in ESTABLISHED_CATEGORIES:
            raise UsageError(f"unknown established category {spec.param!r}")
        held = ESTABLISHED_CATEGORIES[spec.param]
        others = {c for c in ESTABLISHED_CATEGORIES.values() if c != held}
        keep_train = lambda r: not r.is_fake or r.combo() in others
        keep_test = lambda r: not r.is_fake or r.combo() == held
    else:
        raise UsageError(f"build_protocol cannot handle kind {spec.kind!r}")

    phases = {
        "train": [sid for sid in base["train"] if keep_train(rec(sid))],
        "val": [sid for sid in base["val"] if keep_train(rec(sid))],
        "test": [sid for sid in base["test"] if keep_test(rec(sid))],
    }
    if not phases["train"]:
        raise EmptyTrainSet(f"{spec.name()}: empty training set")
    if not any(rec(sid).is_fake for sid in phases["test"]):
        raise EmptyTestSet(f"{spec.name()}: no fake samples in the test set")

    instance = ProtocolInstance(
        spec=spec,
        phases=phases,
        inventories={p: _inventory(manifest, ids) for p, ids in phases.items()},
    )
    instance.diagnosis = diagnose(instance, manifest)
    return instance


def cross_dataset_protocol(
    train_manifest: Manifest,
    test_manifest: Manifest,
    train_assignment: SplitAssignment | None = None,
    test_assignment: SplitAssignment | None = None,
    seed: int = 0,
) -> ProtocolInstance:
    """Train on one dataset's full assignment, test on the other's full test phase."""
    if train_manifest.taxonomy.dataset == test_manifest.taxonomy.dataset:
        raise DistinctDatasetsRequired("cross-dataset protocol needs two distinct datasets")
    if train_assignment is None:
        train_assignment = _default_assignment(train_manifest, seed)
    if test_assignment is None:
        test_assignment = _default_assignment(test_manifest, seed)

    train_base = _phase_ids(train_assignment, train_manifest)
    test_base = _phase_ids(test_assignment, test_manifest)
    spec = ProtocolSpec(
        kind="cross_dataset",
        dataset=train_manifest.taxonomy.dataset,
        param=test_manifest.taxonomy.dataset,
        seed=seed,
    )
    phases = {"train": train_base["train"], "val": train_base["val"], "test": test_base["test"]}
    instance = ProtocolInstance(
        spec=spec,
        phases=phases,
        inventories={
            "train": _inventory(train_manifest, phases["train"]),
            "val": _inventory(train_manifest, phases["val"]),
            "test": _inventory(test_manifest, phases["test"]),
        },
    )
    shared = set(train_manifest.taxonomy.video_methods) & set(test_manifest.taxonomy.video_methods)
    shared |= set(train_manifest.taxonomy.audio_methods) & set(test_manifest.taxonomy.audio_methods)
    instance.diagnosis = DiagnosisReport(shared_manipulation_subset=sorted(shared))
    return instance


def _default_assignment(manifest: Manifest, seed: int) -> SplitAssignment:
    if any(r.provided_split for r in manifest.records):
        return assign_deepspeak(manifest, seed=seed)
    return assign_identity_split(manifest, seed=seed)


def held_out_methods(instance: ProtocolInstance, taxonomy: Taxonomy) -> set:
    """The manipulation techniques an instance claims to generalize to."""
    spec = instance.spec
    if spec.kind == "method":
        groups = method_groups(taxonomy)
        combos = groups.get(spec.param, [])
        if spec.param in taxonomy.video_families:
            return {spec.param}
        return {c.audio_method for c in combos if c.audio_method}
    if spec.kind == "family":
        return taxonomy.methods_of_family(spec.param)
    if spec.kind == "established":
        return set(ESTABLISHED_CATEGORIES[spec.param].methods)
    return set()


def diagnose(instance: ProtocolInstance, manifest: Manifest) -> DiagnosisReport:
    """Identity and manipulation leaks for one instance.

    A manipulation leak is a held-out technique appearing, alone or inside a
    combo, in the train-side inventory of its own generalization test.
    """
    report = DiagnosisReport()

    train_idents = {}
    for sid in instance.phases["train"] + instance.phases["val"]:
        if manifest.has(sid):
            ident = manifest.record(sid).source_identity
            train_idents[ident] = train_idents.get(ident, 0) + 1
    for sid in instance.phases["test"]:
        if not manifest.has(sid):
            continue
        ident = manifest.record(sid).source_identity
        if ident in train_idents:
            if not any(l["identity"] == ident for l in report.identity_leaks):
                report.identity_leaks.append(
                    {"identity": ident, "severity": "high", "instance": instance.name}
                )

    taxonomy = manifest.taxonomy
    held = held_out_methods(instance, taxonomy)
    by_label = {c.label(): c for c in taxonomy.fake_combos}
    train_combos = [by_label[l] for l in instance.inventories["train"] if l in by_label]
    test_combos = [by_label[l] for l in instance.inventories["test"] if l in by_label]
    for method in sorted(held):
        carriers = [c.label() for c in train_combos if method in c.methods]
        targets = [c.label() for c in test_combos if method in c.methods]
        if carriers and targets:
            report.manipulation_leaks.append(
                {
                    "method": method,
                    "train_combos": carriers,
                    "test_combos": targets,
                    "severity": "medium",
                    "instance": instance.name,
                }
            )
    return report


def diagnose_suite(instances: list, manifest: Manifest) -> DiagnosisReport:
    """Merge per-instance diagnoses and add suite-level coverage gaps.

    Coverage is accounted over the taxonomy's video-manipulation combos: a
    combo never appearing in any instance's test inventory is a blind spot.
    Pure-audio combos are reachable only through their own method split and
    are excluded from the gap universe.
    """
    merged = DiagnosisReport()
    tested = set()
    for inst in instances:
        rep = inst.diagnosis or diagnose(inst, manifest)
        merged.identity_leaks.extend(rep.identity_leaks)
        merged.manipulation_leaks.extend(rep.manipulation_leaks)
        tested.update(inst.inventories["test"])
    universe = [c for c in manifest.taxonomy.fake_combos if c.video_methods]
    merged.coverage_gaps = sorted(c.label() for c in universe if c.label() not in tested)
    return merged


# --- protocol directories ---

PROTOCOL_FILE = "protocol.json"
DIAGNOSIS_FILE = "diagnosis.json"


def save_protocol(instance: ProtocolInstance, manifests: dict, out_dir: str | Path) -> list:
    """Write train/val/test manifest CSVs plus protocol and diagnosis JSON.

    `manifests` maps phase -> source manifest (train and test differ for
    cross-dataset instances).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for phase in PHASES:
        src = manifests[phase]
        path = out_dir / f"{phase}.csv"
        save_manifest(src.subset(instance.phases[phase]), path)
        written.extend([str(path), str(path.with_suffix(".meta.json"))])
    spec = instance.spec
    doc = {
        "schema_version": 1,
        "name": instance.name,
        "spec": {"kind": spec.kind, "dataset": spec.dataset, "param": spec.param, "seed": spec.seed},
        "counts": {p: len(instance.phases[p]) for p in PHASES},
        "inventories": instance.inventories,
    }
    proto_path = out_dir / PROTOCOL_FILE
    proto_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    written.append(str(proto_path))
    diag = instance.diagnosis or DiagnosisReport()
    diag_path = out_dir / DIAGNOSIS_FILE
    diag_path.write_text(json.dumps(diag.to_json(), indent=2, sort_keys=True) + "\n")
    written.append(str(diag_path))
    return written


def load_protocol(proto_dir: str | Path):
    """Reload a protocol dir -> (instance, {phase: manifest})."""
    proto_dir = Path(proto_dir)
    doc = json.loads((proto_dir / PROTOCOL_FILE).read_text())
    manifests = {p: load_manifest(proto_dir / f"{p}.csv") for p in PHASES}
    spec = ProtocolSpec(
        kind=doc["spec"]["kind"],
        dataset=doc["spec"]["dataset"],
        param=doc["spec"]["param"],
        seed=doc["spec"]["seed"],
    )
    instance = ProtocolInstance(
        spec=spec,
        phases={p: [r.sample_id for r in manifests[p].records] for p in PHASES},
        inventories=doc["inventories"],
    )
    diag_path = proto_dir / DIAGNOSIS_FILE
    if diag_path.is_file():
        d = json.loads(diag_path.read_text())
        instance.diagnosis = DiagnosisReport(
            identity_leaks=d.get("identity_leaks", []),
            manipulation_leaks=d.get("manipulation_leaks", []),
            coverage_gaps=d.get("coverage_gaps", []),
            shared_manipulation_subset=d.get("shared_manipulation_subset", []),
        )
    return instance, manifests
