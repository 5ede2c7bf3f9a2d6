"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ConfigOverrides(BaseModel):
    """Optional overrides of the resolved run configuration; unset fields keep defaults."""

    variant: str | None = None
    context_depth: int | None = None
    alpha0: float | None = None
    alpha_context: float | None = None
    beta: float | None = None
    eps_b: float | None = None
    eps_n: float | None = None
    kappa: float | None = None
    tau_b: float | None = None
    tau_n: float | None = None
    a_t: float | None = None
    h_t: float | None = None
    mu_age: int | None = None
    mu_size: int | None = None
    epochs: int | None = None
    context_source: str | None = None
    d_t_pose: float | None = None
    d_t_learning: float | None = None
    flag_fraction: float | None = None
    cm_to_px: float | None = None
    frames: int | None = None
    seed: int | None = None
    avatar_seeds: list[int] | None = None
    source_dims: tuple[int, int] | None = None


class ConfiguredRequest(BaseModel):
    config_path: str | None = None
    config: ConfigOverrides | None = None


class HealthResponse(BaseModel):
    status: str
    version: str


class GenerateRequest(ConfiguredRequest):
    out_dir: str
    avatars: int = 10
    variants: list[str] = Field(default_factory=lambda: ["all"])
    perturbations: list[str] = Field(default_factory=lambda: ["all"])


class GenerateResponse(BaseModel):
    out_dir: str
    sequence_files: int
    dataset_digest: str
    config_digest: str
    manifest_path: str


class IngestRequest(ConfiguredRequest):
    in_dir: str
    out_path: str
    label: str | None = None


class IngestResponse(BaseModel):
    out_path: str
    frames: int
    label: str


class TrainRequest(ConfiguredRequest):
    seq_path: str
    out_path: str
    variant: str | None = None
    epochs: int | None = None
    exercise_id: int = 0


class TrainResponse(BaseModel):
    out_path: str
    variant: str
    nodes: int
    edges: int
    trajectory_length: int | None = None
    config_digest: str
    manifest_path: str


class AdaptRequest(ConfiguredRequest):
    snapshot_path: str
    baseline_path: str
    out_path: str
    exercise_id: int = 0


class AdaptResponse(BaseModel):
    out_path: str
    adapted: bool
    lineage: int | None
    nearest_lineage: int
    first_frame_distance: float
    manifest_path: str


class FeedbackRequest(ConfiguredRequest):
    snapshot_path: str
    seq_path: str
    out_csv: str | None = None
    overlay_dir: str | None = None
    truth_path: str | None = None
    exercise_id: int = 0
    lineage: int | None = None
    gamma_horizon: int = 5


class JointVerdict(BaseModel):
    joint: str
    mean_error: float
    red_frames: int
    unmasked_frames: int
    erroneous: bool


class FeedbackResponse(BaseModel):
    frames_compared: int
    red_flags: int
    erroneous_joints: list[str]
    lineage: int | None = None
    accuracy: float | None = None
    joints: list[JointVerdict]
    csv_path: str | None = None
    overlays_written: int = 0


class PredictRequest(ConfiguredRequest):
    snapshot_path: str
    start: int | None = None  # default: lowest node id
    steps: int = 100
    out_csv: str | None = None


class PredictResponse(BaseModel):
    node_ids: list[int]
    stalled: bool
    csv_path: str | None = None


class ExperimentRequest(ConfiguredRequest):
    number: int
    dataset_dir: str
    out_dir: str


class ExperimentResponse(BaseModel):
    csv_path: str
    manifest_path: str
    averages: dict[str, float]
