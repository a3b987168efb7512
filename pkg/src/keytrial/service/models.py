"""Pydantic request/response models for the trial-conduct API."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

from ..trial import MtdSelection, TrialConfig, TrialState


class TrialConfigModel(BaseModel):
    rows: int = Field(ge=1, le=20)
    cols: int = Field(ge=1, le=20)
    phi: float = Field(gt=0.0, lt=1.0)
    eps1: float = Field(gt=0.0)
    eps2: float = Field(gt=0.0)
    max_n: int = Field(ge=1, le=1_000_000)
    cohort_size: int = Field(default=1, ge=1)
    cutoff: float = Field(default=0.95, gt=0.0, lt=1.0)
    algorithm: Literal["key1", "key2", "key3", "key4", "key5"] = "key1"
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _domain_rules(self):
        # surface the engine's own validation as field-level messages
        self.to_config().validate()
        return self

    def to_config(self) -> TrialConfig:
        return TrialConfig(
            rows=self.rows,
            cols=self.cols,
            phi=self.phi,
            eps1=self.eps1,
            eps2=self.eps2,
            max_n=self.max_n,
            cohort_size=self.cohort_size,
            cutoff=self.cutoff,
            algorithm=self.algorithm,
            seed=self.seed,
        )


class CohortRequest(BaseModel):
    dlt_count: int = Field(ge=0)
    expected_revision: int = Field(ge=1)


class FinalizeRequest(BaseModel):
    force: bool = False


class TrialStateModel(BaseModel):
    version: int
    rows: int
    cols: int
    n: list[list[int]]
    y: list[list[int]]
    current: list[int]
    eliminated: list[list[int]]
    status: str
    history: list[dict]
    total_patients: int
    n_escalations: int
    n_incoherent_escalations: int

    @classmethod
    def from_state(cls, state: TrialState) -> "TrialStateModel":
        return cls(**state.to_json_dict())


class SelectionModel(BaseModel):
    selected: Optional[list[int]] = None
    estimates: list[list[Optional[float]]]
    reason: Optional[str] = None

    @classmethod
    def from_selection(cls, selection: MtdSelection) -> "SelectionModel":
        return cls(**selection.to_json_dict())


class TrialResponse(BaseModel):
    id: str
    config: TrialConfigModel
    state: TrialStateModel
    revision: int
    created_at: str
    updated_at: str
    finalized: bool
    selection: Optional[SelectionModel] = None


class TrialSummary(BaseModel):
    id: str
    rows: int
    cols: int
    phi: float
    algorithm: str
    status: str
    total_patients: int
    revision: int
    updated_at: str


class CohortResponse(BaseModel):
    trial: TrialResponse
    decision: Optional[str]
    next_dose: Optional[list[int]]
    newly_eliminated: list[list[int]]
    status: str


class FinalizeResponse(BaseModel):
    trial: TrialResponse
    selection: SelectionModel


class DecisionTableRow(BaseModel):
    n: int
    escalate_le: int
    deescalate_ge: int


class DecisionTableResponse(BaseModel):
    phi: float
    eps1: float
    eps2: float
    n_max: int
    rows: list[DecisionTableRow]


class SimulationCreated(BaseModel):
    id: str
    status: str


class SimulationStatus(BaseModel):
    id: str
    status: Literal["queued", "running", "done", "failed"]
    error: Optional[str] = None
    metrics: Optional[dict] = None


class ErrorDetail(BaseModel):
    code: str
    message: str
