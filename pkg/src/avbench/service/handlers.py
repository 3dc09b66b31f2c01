"""Command orchestration: every CLI subcommand and HTTP endpoint lands here.

Handlers take a request model, do the file work, and return a response model;
failures raise HarnessError subclasses that carry the CLI exit code.
"""

from __future__ import annotations

import shutil
import statistics
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .. import audio as audio_mod
from .. import metrics as metrics_mod
from .. import protocols as proto_mod
from .. import sampling as sampling_mod
from ..errors import DecodeError, UsageError
from ..manifest import (
    Manifest,
    ingest_deepspeak,
    ingest_fakeavceleb,
    load_manifest,
    retarget_audio,
    save_manifest,
    validate_manifest,
    with_condition,
)
from ..reporting import RunReport, format_pct, timed_run, write_csv, write_json
from . import schemas as S


def _load_manifest_or_usage(path: str) -> Manifest:
    if not Path(path).is_file():
        raise UsageError(f"manifest not found: {path}")
    return load_manifest(path)


def _analyze_record(record, req: S.AuditRequest):
    track = audio_mod.decode_wav(record.audio_path)
    return audio_mod.analyze_track(
        track,
        window_ms=req.window_ms,
        hop_ms=req.hop_ms,
        threshold_db=req.threshold_db,
        min_ms=req.min_ms,
        mode=req.db_mode,
        sample_id=record.sample_id,
    )


def audit(req: S.AuditRequest) -> S.AuditResponse:
    manifest = _load_manifest_or_usage(req.manifest_path)
    if not manifest.records:
        raise UsageError("no samples")

    report = RunReport(command="audit", arguments=req.model_dump())
    report.add_input(req.manifest_path)
    with timed_run(report):
        records = sorted(manifest.records, key=lambda r: r.sample_id)
        reports, skipped = [], []

        def run_one(record):
            try:
                return record, _analyze_record(record, req), None
            except DecodeError as exc:
                return record, None, exc

        if req.threads > 1:
            with ThreadPoolExecutor(max_workers=req.threads) as pool:
                results = list(pool.map(run_one, records))
        else:
            results = [run_one(r) for r in records]

        for record, silence, exc in results:
            if exc is not None:
                if not req.skip_bad:
                    raise exc
                skipped.append({"sample_id": record.sample_id, "error": str(exc)})
            else:
                reports.append(silence)

        hist = audio_mod.silence_histogram(
            reports, manifest, bin_width_ms=req.bin_width_ms, group_by=req.group_by
        )
        group_of = {
            r.sample_id: audio_mod.group_key(manifest.record(r.sample_id), req.group_by)
            for r in reports
        }

        out_dir = Path(req.out_dir)
        outputs = [
            write_csv(
                out_dir / "silence.csv",
                ["sample_id", "leading_silence_ms", "exceeds_min", "group"],
                [
                    [r.sample_id, r.leading_silence_ms, str(r.exceeds_min).lower(), group_of[r.sample_id]]
                    for r in reports
                ],
            ),
            write_csv(
                out_dir / "histogram.csv",
                ["group", "bin_start_ms", "count"],
                [list(row) for row in hist.rows()],
            ),
        ]

        by_group: dict = {}
        for r in reports:
            by_group.setdefault(group_of[r.sample_id], []).append(r)
        summary = {
            "threshold_db": req.threshold_db,
            "min_ms": req.min_ms,
            "db_mode": req.db_mode,
            "n_samples": len(reports),
            "n_skipped": len(skipped),
            "skipped": skipped,
            "inputs": report.input_digests,
            "groups": {
                group: {
                    "n": len(rs),
                    "mean_leading_ms": round(statistics.fmean(r.leading_silence_ms for r in rs), 3),
                    "median_leading_ms": statistics.median(r.leading_silence_ms for r in rs),
                    "fraction_exceeding_min": round(
                        sum(1 for r in rs if r.exceeds_min) / len(rs), 6
                    ),
                }
                for group, rs in sorted(by_group.items())
            },
        }
        outputs.append(write_json(out_dir / "summary.json", summary))
        report.outputs = list(outputs)
    report.write(out_dir)
    return S.AuditResponse(
        n_samples=len(reports), n_skipped=len(skipped), outputs=outputs, summary=summary
    )


def trim(req: S.TrimRequest) -> S.TrimResponse:
    manifest = _load_manifest_or_usage(req.manifest_path)
    if not manifest.records:
        raise UsageError("no samples")

    report = RunReport(command="trim", arguments=req.model_dump())
    report.add_input(req.manifest_path)
    out_dir = Path(req.out_dir)
    n_trimmed = n_copied = 0
    mapping = {}
    log_rows = []
    with timed_run(report):
        try:
            out_dir.joinpath("audio").mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DecodeError(f"cannot create output directory: {exc}") from exc
        for record in sorted(manifest.records, key=lambda r: r.sample_id):
            track = audio_mod.decode_wav(record.audio_path)
            silence = audio_mod.analyze_track(
                track,
                window_ms=req.window_ms,
                hop_ms=req.hop_ms,
                threshold_db=req.threshold_db,
                min_ms=req.min_ms,
                mode=req.db_mode,
                sample_id=record.sample_id,
            )
            dest = out_dir / "audio" / f"{record.sample_id}.wav"
            try:
                dest.parent.mkdir(parents=True, exist_ok=True)
                if silence.leading_silence_ms > 0:
                    trimmed = audio_mod.trim_leading_silence(track, silence)
                    audio_mod.encode_wav(trimmed, dest)
                    n_trimmed += 1
                    action = "trimmed"
                else:
                    shutil.copyfile(record.audio_path, dest)
                    n_copied += 1
                    action = "copied"
            except OSError as exc:
                raise DecodeError(f"write failure for {dest}: {exc}") from exc
            mapping[record.sample_id] = str(dest)
            log_rows.append([record.sample_id, silence.leading_silence_ms, action])

        trimmed_manifest = with_condition(retarget_audio(manifest, mapping), "trimmed")
        manifest_path = out_dir / "trimmed.csv"
        save_manifest(trimmed_manifest, manifest_path)
        outputs = [
            str(manifest_path),
            str(manifest_path.with_suffix(".meta.json")),
            write_csv(out_dir / "trim_log.csv", ["sample_id", "trimmed_ms", "action"], log_rows),
            *mapping.values(),
        ]
        report.outputs = list(outputs)
    report.write(out_dir)
    return S.TrimResponse(
        manifest_path=str(manifest_path), n_trimmed=n_trimmed, n_copied=n_copied, outputs=outputs
    )


def parse_protocol_names(names: list, manifest: Manifest) -> list:
    """Expand protocol name strings (incl. suite shorthands) into specs."""
    taxonomy = manifest.taxonomy
    specs = []
    for name in names:
        kind, _, param = name.partition(":")
        if kind == "standard":
            specs.append(proto_mod.ProtocolSpec("standard", taxonomy.dataset))
        elif kind in ("method", "family", "established"):
            if not param:
                raise UsageError(f"protocol {kind!r} needs a parameter, e.g. {kind}:<name>")
            specs.append(proto_mod.ProtocolSpec(kind, taxonomy.dataset, param))
        elif kind == "suite":
            if param == "method":
                for group in sorted(proto_mod.method_groups(taxonomy)):
                    specs.append(proto_mod.ProtocolSpec("method", taxonomy.dataset, group))
            elif param == "family":
                for family in sorted(set(taxonomy.video_families.values())):
                    specs.append(proto_mod.ProtocolSpec("family", taxonomy.dataset, family))
            elif param == "established":
                for category in proto_mod.ESTABLISHED_CATEGORIES:
                    specs.append(proto_mod.ProtocolSpec("established", taxonomy.dataset, category))
            elif param == "proposed":
                for group in sorted(proto_mod.method_groups(taxonomy)):
                    specs.append(proto_mod.ProtocolSpec("method", taxonomy.dataset, group))
                for family in sorted(set(taxonomy.video_families.values())):
                    specs.append(proto_mod.ProtocolSpec("family", taxonomy.dataset, family))
            else:
                raise UsageError(f"unknown suite {param!r}")
        else:
            raise UsageError(f"unknown protocol {name!r}")
    return specs


def splits_make(req: S.SplitsMakeRequest) -> S.SplitsMakeResponse:
    manifest = _load_manifest_or_usage(req.manifest_path)
    if not manifest.records:
        raise UsageError("no samples")

    report = RunReport(command="splits make", arguments=req.model_dump())
    report.add_input(req.manifest_path)
    with timed_run(report):
        if any(r.provided_split for r in manifest.records):
            assignment = proto_mod.assign_deepspeak(
                manifest, val_fraction=req.val_fraction, seed=req.seed, carve=req.val_carve
            )
        else:
            assignment = proto_mod.assign_identity_split(
                manifest, fractions=req.fractions, seed=req.seed
            )
        specs = parse_protocol_names(req.protocols, manifest)
        out_dir = Path(req.out_dir)
        outputs = []
        summaries = []
        instances = []
        for spec in specs:
            spec = proto_mod.ProtocolSpec(spec.kind, spec.dataset, spec.param, req.seed)
            instance = proto_mod.build_protocol(assignment, manifest, spec)
            instances.append(instance)
            inst_dir = out_dir / instance.name
            written = proto_mod.save_protocol(
                instance, {p: manifest for p in proto_mod.PHASES}, inst_dir
            )
            outputs.extend(written)
            summaries.append(
                S.InstanceSummary(
                    name=instance.name,
                    counts={p: len(instance.phases[p]) for p in proto_mod.PHASES},
                    clean=instance.diagnosis.is_empty,
                    out_dir=str(inst_dir),
                )
            )
        suite_diag = None
        if len(instances) > 1:
            suite = proto_mod.diagnose_suite(instances, manifest)
            suite_diag = suite.to_json()
            outputs.append(write_json(out_dir / "diagnosis.json", suite_diag))
        report.outputs = list(outputs)
    report.write(out_dir)
    return S.SplitsMakeResponse(instances=summaries, suite_diagnosis=suite_diag, outputs=outputs)


def _protocol_dirs(root: Path) -> list:
    if (root / proto_mod.PROTOCOL_FILE).is_file():
        return [root]
    subdirs = sorted(
        d for d in root.iterdir() if d.is_dir() and (d / proto_mod.PROTOCOL_FILE).is_file()
    )
    if not subdirs:
        raise UsageError(f"{root}: no protocol.json found here or in subdirectories")
    return subdirs


def _merged_manifest(manifests: dict) -> Manifest:
    seen = {}
    for phase in proto_mod.PHASES:
        for record in manifests[phase].records:
            seen.setdefault(record.sample_id, record)
    return Manifest(
        taxonomy=manifests["test"].taxonomy, records=list(seen.values()), provenance={}
    )


def splits_check(req: S.SplitsCheckRequest) -> S.SplitsCheckResponse:
    root = Path(req.protocol_dir)
    if not root.is_dir():
        raise UsageError(f"protocol directory not found: {root}")
    dirs = _protocol_dirs(root)
    instances = []
    merged_manifest = None
    for d in dirs:
        instance, manifests = proto_mod.load_protocol(d)
        merged_manifest = _merged_manifest(manifests)
        instance.diagnosis = proto_mod.diagnose(instance, merged_manifest)
        if instance.spec.kind == "cross_dataset" and instance.diagnosis is not None:
            train_tax = manifests["train"].taxonomy
            test_tax = manifests["test"].taxonomy
            shared = set(train_tax.video_methods) & set(test_tax.video_methods)
            shared |= set(train_tax.audio_methods) & set(test_tax.audio_methods)
            instance.diagnosis.shared_manipulation_subset = sorted(shared)
        instances.append(instance)
    if len(instances) > 1:
        diagnosis = proto_mod.diagnose_suite(instances, merged_manifest)
    else:
        diagnosis = instances[0].diagnosis
    ok = not (diagnosis.identity_leaks or diagnosis.manipulation_leaks)
    return S.SplitsCheckResponse(diagnosis=diagnosis.to_json(), ok=ok)


def _pick_condition(sets: dict, wanted: str | None, path: str):
    if wanted:
        if wanted not in sets:
            raise UsageError(f"{path}: no rows with condition {wanted!r}")
        return sets[wanted]
    if len(sets) == 1:
        return next(iter(sets.values()))
    if "untrimmed" in sets:
        return sets["untrimmed"]
    raise UsageError(f"{path}: several conditions present, pass one explicitly")


def _eval_outputs(table, out_dir: str | None, stem: str) -> list:
    if not out_dir:
        return []
    out = Path(out_dir)
    rows = [
        [r.group, repr(r.auc), repr(r.ap), r.n_real, r.n_fake] for r in table.rows
    ]
    return [
        write_json(out / f"{stem}.json", table.to_json()),
        write_csv(out / f"{stem}.csv", ["group", "auc", "ap", "n_real", "n_fake"], rows),
    ]


def evaluate(req: S.EvalRequest) -> S.EvalResponse:
    if not Path(req.scores_path).is_file():
        raise UsageError(f"scores file not found: {req.scores_path}")
    sets = metrics_mod.load_predictions(req.scores_path)
    predictions = _pick_condition(sets, req.condition, req.scores_path)
    instance, manifests = proto_mod.load_protocol(req.protocol_dir)
    table = metrics_mod.grouped_eval(
        predictions, instance, manifests["test"], group_by=req.group_by, avg=req.avg
    )
    outputs = _eval_outputs(table, req.out_dir, f"eval_{table.condition}")
    if req.out_dir:
        report = RunReport(command="eval", arguments=req.model_dump())
        report.add_input(req.scores_path)
        report.outputs = outputs
        report.write(req.out_dir)
    return S.EvalResponse(table=table.to_json(), outputs=outputs)


def _suite_eval(predictions, dirs) -> metrics_mod.EvalTable:
    """One overall row per protocol instance, plus the unweighted AVG."""
    table = metrics_mod.EvalTable(
        group_by="split", detector=predictions.detector, condition=predictions.condition
    )
    missing: set = set()
    for d in dirs:
        instance, manifests = proto_mod.load_protocol(d)
        absent = [
            sid for sid in instance.phases["test"] if predictions.score_of(sid) is None
        ]
        missing.update(absent)
        if absent:
            continue
        overall = metrics_mod.grouped_eval(predictions, instance, manifests["test"], group_by="split")
        table.rows.append(overall.row(instance.name))
    if missing:
        raise metrics_mod.MissingPrediction(missing)
    avg_auc = sum(r.auc for r in table.rows) / len(table.rows)
    avg_ap = sum(r.ap for r in table.rows) / len(table.rows)
    table.rows.append(
        metrics_mod.EvalRow(
            group=metrics_mod.EvalTable.AVG,
            auc=avg_auc,
            ap=avg_ap,
            n_real=sum(r.n_real for r in table.rows),
            n_fake=sum(r.n_fake for r in table.rows),
        )
    )
    return table


def eval_compare(req: S.EvalCompareRequest) -> S.EvalCompareResponse:
    for path in (req.untrimmed_path, req.trimmed_path):
        if not Path(path).is_file():
            raise UsageError(f"scores file not found: {path}")
    untrimmed = _pick_condition(
        metrics_mod.load_predictions(req.untrimmed_path), "untrimmed", req.untrimmed_path
    )
    trimmed = _pick_condition(
        metrics_mod.load_predictions(req.trimmed_path), "trimmed", req.trimmed_path
    )
    root = Path(req.protocol_dir)
    if not root.is_dir():
        raise UsageError(f"protocol directory not found: {root}")
    dirs = _protocol_dirs(root)
    if len(dirs) > 1:
        table_u = _suite_eval(untrimmed, dirs)
        table_t = _suite_eval(trimmed, dirs)
    else:
        instance, manifests = proto_mod.load_protocol(dirs[0])
        table_u = metrics_mod.grouped_eval(
            untrimmed, instance, manifests["test"], group_by=req.group_by, avg=req.avg
        )
        table_t = metrics_mod.grouped_eval(
            trimmed, instance, manifests["test"], group_by=req.group_by, avg=req.avg
        )
    delta = metrics_mod.delta_report(table_u, table_t, threshold=req.threshold)

    outputs = []
    if req.out_dir:
        out = Path(req.out_dir)
        rows = [
            [r.group, f"{r.auc_untrimmed:.2f}", f"{r.auc_trimmed:.2f}", f"{r.delta:+.2f}", r.flag]
            for r in delta.rows
        ]
        outputs = [
            write_json(out / "delta.json", delta.to_json()),
            write_csv(
                out / "delta.csv",
                ["group", "auc_untrimmed", "auc_trimmed", "delta", "flag"],
                rows,
            ),
        ]
        report = RunReport(command="eval compare", arguments=req.model_dump())
        report.add_input(req.untrimmed_path)
        report.add_input(req.trimmed_path)
        report.outputs = outputs
        report.write(req.out_dir)
    return S.EvalCompareResponse(delta_table=delta.to_json(), outputs=outputs)


def sample_plan(req: S.SamplePlanRequest) -> S.SamplePlanResponse:
    manifest = _load_manifest_or_usage(req.manifest_path)
    if not manifest.records:
        raise UsageError("no samples")
    config = sampling_mod.SamplingConfig(
        n_frames=req.n_frames, step=req.step, jitter=req.jitter, seed=req.seed
    )
    if req.jitter and req.strategy != "training":
        raise UsageError("jitter only applies to the training strategy")
    plans = sampling_mod.plan_manifest(manifest, config, req.strategy, max_clips=req.max_clips)
    sampling_mod.save_plans(plans, config, req.strategy, req.out_path)
    report = RunReport(command="sample plan", arguments=req.model_dump())
    report.add_input(req.manifest_path)
    report.outputs = [req.out_path]
    report.write(Path(req.out_path).parent)
    return S.SamplePlanResponse(n_plans=len(plans), outputs=[req.out_path])


def cross(req: S.CrossRequest) -> S.CrossResponse:
    train_manifest = _load_manifest_or_usage(req.train_manifest)
    test_manifest = _load_manifest_or_usage(req.test_manifest)
    report = RunReport(command="cross", arguments=req.model_dump())
    report.add_input(req.train_manifest)
    report.add_input(req.test_manifest)
    with timed_run(report):
        instance = proto_mod.cross_dataset_protocol(train_manifest, test_manifest, seed=req.seed)
        outputs = proto_mod.save_protocol(
            instance,
            {"train": train_manifest, "val": train_manifest, "test": test_manifest},
            req.out_dir,
        )
        report.outputs = list(outputs)
    report.write(req.out_dir)
    return S.CrossResponse(
        name=instance.name,
        counts={p: len(instance.phases[p]) for p in proto_mod.PHASES},
        shared_manipulations=instance.diagnosis.shared_manipulation_subset,
        outputs=outputs,
    )


def ingest(req: S.IngestRequest) -> S.IngestResponse:
    if req.dataset == "fakeavceleb":
        manifest = ingest_fakeavceleb(req.root)
    elif req.dataset == "deepspeak":
        manifest = ingest_deepspeak(req.root, metadata=req.metadata)
    else:
        raise UsageError(f"unknown dataset {req.dataset!r} (fakeavceleb or deepspeak)")
    save_manifest(manifest, req.out_path)
    outputs = [req.out_path, str(Path(req.out_path).with_suffix(".meta.json"))]
    report = RunReport(command="ingest", arguments=req.model_dump())
    report.outputs = outputs
    report.write(Path(req.out_path).parent)
    return S.IngestResponse(
        n_records=len(manifest.records),
        n_identities=len(manifest.identities()),
        outputs=outputs,
    )


def validate(req: S.ValidateRequest) -> S.ValidateResponse:
    manifest = _load_manifest_or_usage(req.manifest_path)
    issues = validate_manifest(manifest, check_files=req.check_files)
    return S.ValidateResponse(issues=[vars(i) for i in issues], ok=not issues)


def metric_auc(req: S.AucRequest) -> S.MetricResponse:
    return S.MetricResponse(value=metrics_mod.auc(req.labels, req.scores))


def metric_ap(req: S.AucRequest) -> S.MetricResponse:
    return S.MetricResponse(value=metrics_mod.average_precision(req.labels, req.scores))


def metric_fake_score(req: S.FakeScoreRequest) -> S.FakeScoreResponse:
    return S.FakeScoreResponse(
        fake_score=metrics_mod.fake_score(req.distribution),
        decision=metrics_mod.argmax_decision(req.distribution),
    )


def render_eval_table(table: dict) -> str:
    """Terminal rendering, metric values in percent with two decimals."""
    lines = [f"{'group':<32} {'AUC':>8} {'AP':>8} {'n_real':>7} {'n_fake':>7}"]
    for row in table["rows"]:
        lines.append(
            f"{row['group']:<32} {format_pct(row['auc']):>8} {format_pct(row['ap']):>8} "
            f"{row['n_real']:>7} {row['n_fake']:>7}"
        )
    return "\n".join(lines)


def render_delta_table(table: dict) -> str:
    lines = [f"{'group':<32} {'untrimmed':>10} {'trimmed':>10} {'delta':>8}  flag"]
    for row in table["rows"]:
        lines.append(
            f"{row['group']:<32} {row['auc_untrimmed']:>10.2f} {row['auc_trimmed']:>10.2f} "
            f"{row['delta']:>+8.2f}  {row['flag']}"
        )
    return "\n".join(lines)
