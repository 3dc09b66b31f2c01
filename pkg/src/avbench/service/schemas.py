"""Request/response models shared by the HTTP service and the thin CLI.

Path-valued fields refer to files on the machine running the service; the
harness is designed to run next to the data it audits.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class ErrorPayload(BaseModel):
    error: str
    exit_code: int
    message: str


class AuditRequest(BaseModel):
    manifest_path: str
    out_dir: str
    threshold_db: float = 20.0
    min_ms: float = 20.0
    bin_width_ms: float = 20.0
    window_ms: int = 10
    hop_ms: int = 5
    db_mode: str = "relative"
    group_by: str = "manipulation"
    skip_bad: bool = False
    threads: int = 1


class AuditResponse(BaseModel):
    n_samples: int
    n_skipped: int
    outputs: list[str]
    summary: dict


class TrimRequest(BaseModel):
    manifest_path: str
    out_dir: str
    threshold_db: float = 20.0
    min_ms: float = 20.0
    window_ms: int = 10
    hop_ms: int = 5
    db_mode: str = "relative"


class TrimResponse(BaseModel):
    manifest_path: str
    n_trimmed: int
    n_copied: int
    outputs: list[str]


class SplitsMakeRequest(BaseModel):
    manifest_path: str
    out_dir: str
    protocols: list[str] = Field(default_factory=lambda: ["standard"])
    seed: int = 0
    fractions: tuple[float, float, float] = (0.60, 0.10, 0.30)
    val_fraction: float = 0.2
    val_carve: str = "identity"


class InstanceSummary(BaseModel):
    name: str
    counts: dict
    clean: bool
    out_dir: str


class SplitsMakeResponse(BaseModel):
    instances: list[InstanceSummary]
    suite_diagnosis: dict | None = None
    outputs: list[str]


class SplitsCheckRequest(BaseModel):
    protocol_dir: str
    strict: bool = False


class SplitsCheckResponse(BaseModel):
    diagnosis: dict
    ok: bool


class EvalRequest(BaseModel):
    scores_path: str
    protocol_dir: str
    group_by: str = "combo"
    condition: str | None = None
    avg: str = "unweighted"
    out_dir: str | None = None


class EvalResponse(BaseModel):
    table: dict
    outputs: list[str]


class EvalCompareRequest(BaseModel):
    untrimmed_path: str
    trimmed_path: str
    protocol_dir: str
    threshold: float = 10.0
    group_by: str = "combo"
    avg: str = "unweighted"
    out_dir: str | None = None


class EvalCompareResponse(BaseModel):
    delta_table: dict
    outputs: list[str]


class SamplePlanRequest(BaseModel):
    manifest_path: str
    out_path: str
    n_frames: int = 16
    step: int = 5
    jitter: bool = False
    strategy: str = "beginning"
    max_clips: int = 5
    seed: int = 0


class SamplePlanResponse(BaseModel):
    n_plans: int
    outputs: list[str]


class CrossRequest(BaseModel):
    train_manifest: str
    test_manifest: str
    out_dir: str
    seed: int = 0


class CrossResponse(BaseModel):
    name: str
    counts: dict
    shared_manipulations: list[str]
    outputs: list[str]


class IngestRequest(BaseModel):
    dataset: str  # fakeavceleb | deepspeak
    root: str
    out_path: str
    metadata: str | None = None


class IngestResponse(BaseModel):
    n_records: int
    n_identities: int
    outputs: list[str]


class ValidateRequest(BaseModel):
    manifest_path: str
    check_files: bool = False


class ValidateResponse(BaseModel):
    issues: list[dict]
    ok: bool


class AucRequest(BaseModel):
    labels: list[int]
    scores: list[float]


class MetricResponse(BaseModel):
    value: float


class FakeScoreRequest(BaseModel):
    distribution: dict[str, float]


class FakeScoreResponse(BaseModel):
    fake_score: float
    decision: str


class VersionResponse(BaseModel):
    name: str = "avbench"
    version: str
