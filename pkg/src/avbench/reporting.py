"""Run reports and report file writers.

Every command leaves a run_report.json tying outputs to content hashes of the
inputs. Wall time lives only here so all other outputs stay byte-identical
across reruns on unchanged inputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__

RUN_REPORT_FILE = "run_report.json"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunReport:
    command: str
    arguments: dict
    tool_version: str = __version__
    input_digests: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    wall_time_s: float = 0.0

    def add_input(self, path: str | Path) -> None:
        p = Path(path)
        if p.is_file():
            self.input_digests[str(p)] = sha256_file(p)

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "arguments": self.arguments,
            "tool_version": self.tool_version,
            "input_digests": self.input_digests,
            "outputs": sorted(self.outputs),
            "wall_time_s": self.wall_time_s,
        }

    def write(self, out_dir: str | Path) -> str:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / RUN_REPORT_FILE
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        return str(path)


class timed_run:
    """Context manager stamping wall time onto a RunReport."""

    def __init__(self, report: RunReport):
        self.report = report

    def __enter__(self):
        self._t0 = time.monotonic()
        return self.report

    def __exit__(self, *exc):
        self.report.wall_time_s = round(time.monotonic() - self._t0, 6)
        return False


def write_csv(path: str | Path, header: list, rows: list) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return str(path)


def write_json(path: str | Path, payload) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return str(path)


def format_pct(value: float) -> str:
    return f"{value * 100:.2f}"
