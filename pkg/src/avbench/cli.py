"""Command-line client for the harness.

Each subcommand builds the same request model the HTTP service accepts and
either dispatches in-process (default) or POSTs it to a running service via
--server. Exit codes: 0 success, 1 usage/empty input, 2 I/O or decode
failure, 3 coverage/validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import HarnessError
from .service import handlers
from .service import schemas as S


class _Parser(argparse.ArgumentParser):
    # usage problems are exit code 1 under the harness contract
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


_ENDPOINTS = {
    "audit": "/audit",
    "trim": "/trim",
    "splits_make": "/splits/make",
    "splits_check": "/splits/check",
    "eval": "/eval",
    "eval_compare": "/eval/compare",
    "sample_plan": "/sample/plan",
    "cross": "/cross",
    "ingest": "/ingest",
    "validate": "/manifest/validate",
}


def _dispatch(args, key: str, request, handler) -> dict:
    """Run in-process, or POST the request to --server and mirror its result."""
    if args.server:
        import httpx

        url = args.server.rstrip("/") + _ENDPOINTS[key]
        try:
            resp = httpx.post(url, json=request.model_dump(), timeout=600.0)
        except httpx.HTTPError as exc:
            sys.stderr.write(f"error: cannot reach {url}: {exc}\n")
            raise SystemExit(2)
        if resp.status_code == 422 and "exit_code" in resp.text:
            payload = resp.json()
            sys.stderr.write(f"error [{payload.get('error')}]: {payload.get('message')}\n")
            raise SystemExit(int(payload.get("exit_code", 2)))
        if resp.status_code != 200:
            sys.stderr.write(f"error: {url} returned {resp.status_code}: {resp.text}\n")
            raise SystemExit(2)
        return resp.json()
    try:
        return handler(request).model_dump()
    except HarnessError as exc:
        sys.stderr.write(f"error [{type(exc).__name__}]: {exc}\n")
        raise SystemExit(exc.exit_code)
    except OSError as exc:
        sys.stderr.write(f"error [io]: {exc}\n")
        raise SystemExit(2)


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="avbench", description=__doc__)
    registry = [parser]
    parser._all_parsers = registry
    parser.add_argument("--version", action="version", version=f"avbench {__version__}")
    parser.add_argument("--server", default=None, help="base URL of a running avbench service")
    parser.add_argument("--config", default=None, help="JSON file of default flag values")
    parser.add_argument("--format", choices=("text", "json"), default="text",
                        help="stdout rendering (files are always written as JSON + CSV)")
    parser.add_argument("--threads", type=int, default=1)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="build a manifest from a dataset tree")
    p.add_argument("dataset", choices=("fakeavceleb", "deepspeak"))
    p.add_argument("root")
    p.add_argument("--metadata", default=None, help="annotation file (deepspeak)")
    p.add_argument("--out", required=True, help="manifest CSV to write")

    p = sub.add_parser("validate", help="validate a manifest")
    p.add_argument("manifest")
    p.add_argument("--check-files", action="store_true")
    p.add_argument("--strict", action="store_true", help="exit 3 when issues are found")

    p = sub.add_parser("audit", help="leading-silence audit over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold-db", type=float, default=20.0)
    p.add_argument("--min-ms", type=float, default=20.0)
    p.add_argument("--bin-width", type=float, default=20.0)
    p.add_argument("--window-ms", type=int, default=10)
    p.add_argument("--hop-ms", type=int, default=5)
    p.add_argument("--db-mode", choices=("relative", "absolute"), default="relative")
    p.add_argument("--group-by", choices=("manipulation", "label"), default="manipulation")
    p.add_argument("--skip-bad", action="store_true")

    p = sub.add_parser("trim", help="write leading-silence-trimmed audio copies")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold-db", type=float, default=20.0)
    p.add_argument("--min-ms", type=float, default=20.0)
    p.add_argument("--window-ms", type=int, default=10)
    p.add_argument("--hop-ms", type=int, default=5)
    p.add_argument("--db-mode", choices=("relative", "absolute"), default="relative")

    p = sub.add_parser("splits", help="make or check protocol splits")
    splits_sub = p.add_subparsers(dest="splits_command", required=True, parser_class=_Parser)
    mk = splits_sub.add_parser("make")
    mk.add_argument("--manifest", required=True)
    mk.add_argument("--protocol", action="append", required=True,
                    help="standard | method:<m> | family:<f> | established:<c> | "
                         "suite:{method,family,established,proposed}; repeatable")
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--out", required=True)
    mk.add_argument("--fractions", default="0.60,0.10,0.30")
    mk.add_argument("--val-fraction", type=float, default=0.2)
    mk.add_argument("--val-carve", choices=("identity", "random"), default="identity")
    ck = splits_sub.add_parser("check")
    ck.add_argument("protocol_dir")
    ck.add_argument("--strict", action="store_true")

    p = sub.add_parser("eval", help="score predictions against a protocol")
    eval_sub = p.add_subparsers(dest="eval_command", required=False, parser_class=_Parser)
    p.add_argument("--scores")
    p.add_argument("--protocol", help="protocol directory")
    p.add_argument("--group-by", choices=("split", "combo", "method", "family", "audio_label"),
                   default="combo")
    p.add_argument("--condition", default=None)
    p.add_argument("--avg", choices=("unweighted", "weighted"), default="unweighted")
    p.add_argument("--out", default=None)
    cmp_p = eval_sub.add_parser("compare")
    cmp_p.add_argument("--untrimmed", required=True)
    cmp_p.add_argument("--trimmed", required=True)
    cmp_p.add_argument("--protocol", required=True, help="protocol or suite directory")
    cmp_p.add_argument("--threshold", type=float, default=10.0,
                       help="significance threshold in percentage points (presets: 10 favc, 3 deepspeak)")
    cmp_p.add_argument("--group-by", choices=("split", "combo", "method", "family", "audio_label"),
                       default="combo")
    cmp_p.add_argument("--avg", choices=("unweighted", "weighted"), default="unweighted")
    cmp_p.add_argument("--out", default=None)

    p = sub.add_parser("sample", help="frame sampling plans")
    sample_sub = p.add_subparsers(dest="sample_command", required=True, parser_class=_Parser)
    sp = sample_sub.add_parser("plan")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--n", type=int, default=16)
    sp.add_argument("--step", type=int, default=5)
    sp.add_argument("--jitter", action="store_true")
    sp.add_argument("--strategy", choices=("training", "beginning", "clips_mean", "clips_max"),
                    default="beginning")
    sp.add_argument("--max-clips", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    p = sub.add_parser("cross", help="cross-dataset protocol")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)

    registry.extend(
        [p, mk, ck, cmp_p, sp]
        + [a for a in sub.choices.values()]
    )
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        try:
            config = json.loads(Path(cfg_path).read_text())
            for p in parser._all_parsers:
                p.set_defaults(**config)
        except (OSError, json.JSONDecodeError) as exc:
            sys.stderr.write(f"error: cannot read config {cfg_path}: {exc}\n")
            return 1
    try:
        args = parser.parse_args(argv)
        return _run(args)
    except SystemExit as exc:
        return int(exc.code or 0)


def _run(args) -> int:
    cmd = args.command

    if cmd == "serve":
        import uvicorn

        uvicorn.run("avbench.service.app:app", host=args.host, port=args.port)
        return 0

    if cmd == "ingest":
        req = S.IngestRequest(dataset=args.dataset, root=args.root,
                              out_path=args.out, metadata=args.metadata)
        payload = _dispatch(args, "ingest", req, handlers.ingest)
        _emit(args, payload,
              f"ingested {payload['n_records']} records over {payload['n_identities']} identities"
              f" -> {args.out}")
        return 0

    if cmd == "validate":
        req = S.ValidateRequest(manifest_path=args.manifest, check_files=args.check_files)
        payload = _dispatch(args, "validate", req, handlers.validate)
        lines = [f"{i['severity']}: {i['sample_id']}: {i['message']}" for i in payload["issues"]]
        _emit(args, payload, "\n".join(lines) if lines else "manifest is clean")
        return 3 if (args.strict and not payload["ok"]) else 0

    if cmd == "audit":
        req = S.AuditRequest(
            manifest_path=args.manifest, out_dir=args.out, threshold_db=args.threshold_db,
            min_ms=args.min_ms, bin_width_ms=args.bin_width, window_ms=args.window_ms,
            hop_ms=args.hop_ms, db_mode=args.db_mode, group_by=args.group_by,
            skip_bad=args.skip_bad, threads=args.threads,
        )
        payload = _dispatch(args, "audit", req, handlers.audit)
        lines = [f"audited {payload['n_samples']} samples ({payload['n_skipped']} skipped)"]
        for group, stats in payload["summary"]["groups"].items():
            lines.append(
                f"  {group:<32} n={stats['n']:<5} mean={stats['mean_leading_ms']:>8.1f}ms "
                f"median={stats['median_leading_ms']:>6.1f}ms "
                f"exceeding={stats['fraction_exceeding_min'] * 100:.1f}%"
            )
        lines += [f"wrote {p}" for p in payload["outputs"]]
        _emit(args, payload, "\n".join(lines))
        return 0

    if cmd == "trim":
        req = S.TrimRequest(
            manifest_path=args.manifest, out_dir=args.out, threshold_db=args.threshold_db,
            min_ms=args.min_ms, window_ms=args.window_ms, hop_ms=args.hop_ms,
            db_mode=args.db_mode,
        )
        payload = _dispatch(args, "trim", req, handlers.trim)
        _emit(args, payload,
              f"trimmed {payload['n_trimmed']}, copied {payload['n_copied']} "
              f"-> {payload['manifest_path']}")
        return 0

    if cmd == "splits" and args.splits_command == "make":
        fractions = tuple(float(x) for x in str(args.fractions).split(","))
        req = S.SplitsMakeRequest(
            manifest_path=args.manifest, out_dir=args.out, protocols=args.protocol,
            seed=args.seed, fractions=fractions, val_fraction=args.val_fraction,
            val_carve=args.val_carve,
        )
        payload = _dispatch(args, "splits_make", req, handlers.splits_make)
        lines = []
        for inst in payload["instances"]:
            counts = inst["counts"]
            flag = "clean" if inst["clean"] else "LEAKY"
            lines.append(
                f"{inst['name']:<36} train={counts['train']:<6} val={counts['val']:<6} "
                f"test={counts['test']:<6} {flag}"
            )
        if payload.get("suite_diagnosis"):
            gaps = payload["suite_diagnosis"]["coverage_gaps"]
            lines.append(f"suite coverage gaps: {', '.join(gaps) if gaps else 'none'}")
        _emit(args, payload, "\n".join(lines))
        return 0

    if cmd == "splits" and args.splits_command == "check":
        req = S.SplitsCheckRequest(protocol_dir=args.protocol_dir, strict=args.strict)
        payload = _dispatch(args, "splits_check", req, handlers.splits_check)
        _emit(args, payload, json.dumps(payload["diagnosis"], indent=2, sort_keys=True))
        return 0 if (payload["ok"] or not args.strict) else 3

    if cmd == "eval" and getattr(args, "eval_command", None) == "compare":
        req = S.EvalCompareRequest(
            untrimmed_path=args.untrimmed, trimmed_path=args.trimmed,
            protocol_dir=args.protocol, threshold=args.threshold,
            group_by=args.group_by, avg=args.avg, out_dir=args.out,
        )
        payload = _dispatch(args, "eval_compare", req, handlers.eval_compare)
        _emit(args, payload, handlers.render_delta_table(payload["delta_table"]))
        return 0

    if cmd == "eval":
        if not args.scores or not args.protocol:
            sys.stderr.write("error: eval requires --scores and --protocol\n")
            return 1
        req = S.EvalRequest(
            scores_path=args.scores, protocol_dir=args.protocol, group_by=args.group_by,
            condition=args.condition, avg=args.avg, out_dir=args.out,
        )
        payload = _dispatch(args, "eval", req, handlers.evaluate)
        _emit(args, payload, handlers.render_eval_table(payload["table"]))
        return 0

    if cmd == "sample":
        req = S.SamplePlanRequest(
            manifest_path=args.manifest, out_path=args.out, n_frames=args.n, step=args.step,
            jitter=args.jitter, strategy=args.strategy, max_clips=args.max_clips, seed=args.seed,
        )
        payload = _dispatch(args, "sample_plan", req, handlers.sample_plan)
        _emit(args, payload, f"wrote {payload['n_plans']} plans -> {args.out}")
        return 0

    if cmd == "cross":
        req = S.CrossRequest(
            train_manifest=args.train_manifest, test_manifest=args.test_manifest,
            seed=args.seed, out_dir=args.out,
        )
        payload = _dispatch(args, "cross", req, handlers.cross)
        shared = ", ".join(payload["shared_manipulations"]) or "none"
        _emit(args, payload, f"{payload['name']}: counts={payload['counts']} shared={shared}")
        return 0

    sys.stderr.write(f"error: unhandled command {cmd!r}\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
