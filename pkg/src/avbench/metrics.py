"""Ranking metrics and evaluation tables.

AUC uses the Mann-Whitney formulation (ties get half credit) computed from
tied ranks; average precision walks the score-descending staircase with
block-level precision at tie boundaries. Both are implemented here rather
than pulled from a library so the tie conventions are pinned.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateLabels,
    GroupMismatch,
    InvalidDistribution,
    MissingPrediction,
    NoPositives,
    UsageError,
)

REAL_CLASS = "real"
DISTRIBUTION_ATOL = 1e-6


def _check_distribution(dist: dict) -> None:
    if REAL_CLASS not in dist:
        raise InvalidDistribution(f"distribution lacks a {REAL_CLASS!r} class")
    values = np.array(list(dist.values()), dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise InvalidDistribution("distribution entries must be finite and non-negative")
    if abs(values.sum() - 1.0) > DISTRIBUTION_ATOL:
        raise InvalidDistribution(f"distribution sums to {values.sum():.8f}, not 1")


def fake_score(dist: dict) -> float:
    """Sum of all fake-class probabilities (== 1 - p_real)."""
    _check_distribution(dist)
    return float(sum(p for cls, p in dist.items() if cls != REAL_CLASS))


def argmax_decision(dist: dict) -> str:
    """'fake' when the argmax class is a fake class; ties break toward real."""
    _check_distribution(dist)
    best = max(dist.values())
    return REAL_CLASS if dist[REAL_CLASS] >= best else "fake"


def _tied_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ties receiving the average rank of their block."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=float)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _check_inputs(labels, scores):
    labels = np.asarray(labels, dtype=int)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise UsageError("labels and scores must be 1-d sequences of equal length")
    if not np.all((labels == 0) | (labels == 1)):
        raise UsageError("labels must be 0 (real) or 1 (fake)")
    if not np.all(np.isfinite(scores)):
        raise UsageError("scores must be finite")
    return labels, scores


def auc(labels, scores) -> float:
    """P(random positive outscores a random negative), ties half-credited."""
    labels, scores = _check_inputs(labels, scores)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs at least one positive and one negative")
    ranks = _tied_ranks(scores)
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def average_precision(labels, scores) -> float:
    """Area under the precision-recall staircase, tie blocks collapsed.

    Positions sharing a score form one block; all its positives take the
    precision measured at the block boundary.
    """
    labels, scores = _check_inputs(labels, scores)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoPositives("average precision needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    ap = 0.0
    tp = 0
    seen = 0
    i = 0
    n = len(labels)
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        block_pos = int(sorted_labels[i : j + 1].sum())
        tp += block_pos
        seen += j - i + 1
        if block_pos:
            ap += (block_pos / n_pos) * (tp / seen)
        i = j + 1
    return ap


# --- prediction sets ---

@dataclass
class PredictionSet:
    """Detector outputs: scalar fake-scores or class distributions per sample."""

    detector: str = "unknown"
    condition: str = "untrimmed"
    modality: str | None = None  # marker for unimodal detectors (video|audio)
    scores: dict = field(default_factory=dict)  # sample_id -> float
    distributions: dict = field(default_factory=dict)  # sample_id -> {class: p}

    def score_of(self, sample_id: str) -> float | None:
        if sample_id in self.scores:
            return self.scores[sample_id]
        if sample_id in self.distributions:
            return fake_score(self.distributions[sample_id])
        return None

    def sample_ids(self) -> set:
        return set(self.scores) | set(self.distributions)


def load_predictions(path: str | Path) -> dict:
    """Parse a prediction CSV into {condition: PredictionSet}.

    Header is either `sample_id,condition,score` or
    `sample_id,condition,p_real,p_<class>,...`. Leading `# key: value`
    comment lines may set the detector name and a unimodal modality marker.
    """
    path = Path(path)
    detector = path.stem
    modality = None
    lines = path.read_text().splitlines()
    body_start = 0
    for line in lines:
        if not line.startswith("#"):
            break
        body_start += 1
        text = line.lstrip("#").strip()
        if ":" in text:
            key, value = (part.strip() for part in text.split(":", 1))
            if key == "modality":
                modality = value
            elif key == "detector":
                detector = value
    reader = csv.reader(lines[body_start:])
    header = next(reader, None)
    if not header or header[:2] != ["sample_id", "condition"]:
        raise UsageError(f"{path}: prediction header must start with sample_id,condition")
    scalar = header[2:] == ["score"]
    if not scalar and (len(header) < 3 or header[2] != "p_real"):
        raise UsageError(f"{path}: expected 'score' or 'p_real,...' columns")
    classes = [h[2:] for h in header[2:]] if not scalar else []

    sets: dict = {}
    for row in reader:
        if not row:
            continue
        sid, condition = row[0], row[1]
        pset = sets.setdefault(
            condition,
            PredictionSet(detector=detector, condition=condition, modality=modality),
        )
        if scalar:
            pset.scores[sid] = float(row[2])
        else:
            dist = {cls: float(v) for cls, v in zip(classes, row[2:])}
            _check_distribution(dist)
            pset.distributions[sid] = dist
    if not sets:
        raise UsageError(f"{path}: no prediction rows")
    return sets


def save_predictions(psets: list, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    first = psets[0]
    with open(path, "w", newline="") as fh:
        fh.write(f"# detector: {first.detector}\n")
        if first.modality:
            fh.write(f"# modality: {first.modality}\n")
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "condition", "score"])
        for pset in psets:
            for sid in sorted(pset.scores):
                writer.writerow([sid, pset.condition, repr(pset.scores[sid])])


# --- tables ---

@dataclass
class EvalRow:
    group: str
    auc: float
    ap: float
    n_real: int
    n_fake: int


@dataclass
class EvalTable:
    group_by: str
    detector: str
    condition: str
    rows: list = field(default_factory=list)

    AVG = "AVG"

    def row(self, group: str) -> EvalRow:
        for r in self.rows:
            if r.group == group:
                return r
        raise KeyError(group)

    def to_json(self) -> dict:
        return {
            "group_by": self.group_by,
            "detector": self.detector,
            "condition": self.condition,
            "rows": [vars(r) for r in self.rows],
        }


@dataclass
class DeltaRow:
    group: str
    auc_untrimmed: float  # percent
    auc_trimmed: float  # percent
    delta: float  # percentage points, trimmed - untrimmed
    flag: str  # none | negative-significant | positive-significant


@dataclass
class DeltaTable:
    threshold: float
    rows: list = field(default_factory=list)

    def row(self, group: str) -> DeltaRow:
        for r in self.rows:
            if r.group == group:
                return r
        raise KeyError(group)

    def to_json(self) -> dict:
        return {"threshold": self.threshold, "rows": [vars(r) for r in self.rows]}


def _grouping_key(record, instance_name: str, group_by: str, taxonomy):
    from .protocols import method_groups

    if group_by == "split":
        return instance_name
    if group_by == "combo":
        return record.combo().label()
    if group_by == "method":
        groups = method_groups(taxonomy)
        for name, combos in groups.items():
            if record.combo() in combos:
                return name
        return record.combo().label()
    if group_by == "family":
        fams = sorted({taxonomy.family_of(m) for m in record.video_methods})
        return "+".join(fams) if fams else "AudioOnly"
    if group_by == "audio_label":
        return "FakeAudio" if record.audio_method else "RealAudio"
    raise UsageError(f"unknown group_by {group_by!r}")


def _impossible_for(modality: str, combos: set) -> bool:
    """True when a unimodal detector cannot see any manipulation in the group."""
    if modality == "video":
        return all(not c.video_methods for c in combos)
    if modality == "audio":
        return all(c.audio_method is None for c in combos)
    return False


def grouped_eval(predictions: PredictionSet, instance, manifest, group_by: str = "combo",
                 avg: str = "unweighted") -> EvalTable:
    """Per-group AUC/AP of each fake group against all test reals, plus AVG.

    Groups whose manipulations a marked unimodal detector cannot observe are
    pinned at 0.5 (the convention for impossible splits), never inferred.
    """
    test_ids = instance.phases["test"]
    missing = [sid for sid in test_ids if predictions.score_of(sid) is None]
    if missing:
        raise MissingPrediction(missing)

    reals, fakes_by_group = [], {}
    for sid in test_ids:
        record = manifest.record(sid)
        if record.is_fake:
            key = _grouping_key(record, instance.name, group_by, manifest.taxonomy)
            fakes_by_group.setdefault(key, []).append(sid)
        else:
            reals.append(sid)
    if not reals:
        raise DegenerateLabels("test phase has no real samples")
    if not fakes_by_group:
        raise DegenerateLabels("test phase has no fake samples")

    real_scores = [predictions.score_of(sid) for sid in reals]
    table = EvalTable(group_by=group_by, detector=predictions.detector,
                      condition=predictions.condition)
    weights = []
    for group in sorted(fakes_by_group):
        ids = fakes_by_group[group]
        combos = {manifest.record(sid).combo() for sid in ids}
        if predictions.modality and _impossible_for(predictions.modality, combos):
            row = EvalRow(group=group, auc=0.5, ap=0.5, n_real=len(reals), n_fake=len(ids))
        else:
            scores = real_scores + [predictions.score_of(sid) for sid in ids]
            labels = [0] * len(reals) + [1] * len(ids)
            row = EvalRow(
                group=group,
                auc=auc(labels, scores),
                ap=average_precision(labels, scores),
                n_real=len(reals),
                n_fake=len(ids),
            )
        table.rows.append(row)
        weights.append(len(ids))

    if avg == "weighted":
        total = sum(weights)
        mean_auc = sum(r.auc * w for r, w in zip(table.rows, weights)) / total
        mean_ap = sum(r.ap * w for r, w in zip(table.rows, weights)) / total
    else:
        mean_auc = sum(r.auc for r in table.rows) / len(table.rows)
        mean_ap = sum(r.ap for r in table.rows) / len(table.rows)
    table.rows.append(
        EvalRow(
            group=EvalTable.AVG,
            auc=mean_auc,
            ap=mean_ap,
            n_real=len(reals),
            n_fake=sum(weights),
        )
    )
    return table


def delta_report(eval_untrimmed: EvalTable, eval_trimmed: EvalTable, threshold: float = 10.0) -> DeltaTable:
    """Trimmed-minus-untrimmed AUC deltas in percentage points, with flags."""
    groups_u = [r.group for r in eval_untrimmed.rows]
    groups_t = [r.group for r in eval_trimmed.rows]
    if groups_u != groups_t:
        raise GroupMismatch(f"tables disagree on groups: {groups_u} vs {groups_t}")
    table = DeltaTable(threshold=threshold)
    for ru, rt in zip(eval_untrimmed.rows, eval_trimmed.rows):
        u_pct = ru.auc * 100.0
        t_pct = rt.auc * 100.0
        delta = t_pct - u_pct
        if delta < -threshold:
            flag = "negative-significant"
        elif delta > threshold:
            flag = "positive-significant"
        else:
            flag = "none"
        table.rows.append(
            DeltaRow(group=ru.group, auc_untrimmed=u_pct, auc_trimmed=t_pct, delta=delta, flag=flag)
        )
    return table
