"""FastAPI app for live trial conduct and simulation jobs.

Endpoints:

* ``POST /trials`` (optional ``Idempotency-Key`` header), ``GET /trials``,
  ``GET /trials/{id}``
* ``POST /trials/{id}/cohorts`` with optimistic concurrency via
  ``expected_revision``
* ``POST /trials/{id}/finalize`` (idempotent; ``force`` closes an active
  trial at its current sample size)
* ``GET /trials/{id}/decision-table``
* ``POST /simulations`` (runs a study on a background worker),
  ``GET /simulations``, ``GET /simulations/{id}``,
  ``GET /simulations/{id}/summary.csv``
* ``GET /schema``

Mutations acquire the per-trial writer lock; reads serve the current
in-memory resource. Every response carries the resource revision.
"""

from __future__ import annotations

import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Header, HTTPException, Response

from ..keys import build_decision_table
from ..simulate import (
    SimSpec,
    SpecValidationError,
    run_study,
    study_json_doc,
    summary_csv,
)
from ..trial import TrialStateError, TrialStatus
from .models import (
    CohortRequest,
    CohortResponse,
    DecisionTableResponse,
    FinalizeRequest,
    FinalizeResponse,
    SelectionModel,
    SimulationCreated,
    SimulationStatus,
    TrialConfigModel,
    TrialResponse,
    TrialStateModel,
    TrialSummary,
)
from .store import TrialResource, TrialStore


class _RecordingDraws:
    """Wraps a uniform source, remembering every draw it hands out."""

    def __init__(self, rng):
        self._rng = rng
        self.log: list[float] = []

    def random(self) -> float:
        u = float(self._rng.random())
        self.log.append(u)
        return u


class _SimulationJobs:
    def __init__(self, out_dir: Path, workers: int = 2):
        self.out_dir = out_dir
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._jobs: dict[str, dict] = {}
        self._lock = threading.Lock()

    def submit(self, spec: SimSpec) -> str:
        job_id = uuid.uuid4().hex[:12]
        with self._lock:
            self._jobs[job_id] = {"id": job_id, "status": "queued", "error": None,
                                  "metrics": None, "csv": None}
        self._pool.submit(self._run, job_id, spec)
        return job_id

    def _run(self, job_id: str, spec: SimSpec) -> None:
        with self._lock:
            self._jobs[job_id]["status"] = "running"
        try:
            result = run_study(spec)
            csv_text = summary_csv(result.metrics)
            job_dir = self.out_dir / job_id
            job_dir.mkdir(parents=True, exist_ok=True)
            (job_dir / "summary.csv").write_text(csv_text)
            (job_dir / "study.json").write_text(
                json.dumps(study_json_doc(spec, result.metrics), indent=2) + "\n"
            )
            with self._lock:
                self._jobs[job_id].update(
                    status="done",
                    metrics=result.metrics.to_json_dict(),
                    csv=csv_text,
                )
        except Exception as exc:  # surfaced through the status endpoint
            with self._lock:
                self._jobs[job_id].update(status="failed", error=str(exc))

    def get(self, job_id: str) -> dict | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return dict(job) if job else None

    def list(self) -> list[dict]:
        with self._lock:
            return [
                {k: v for k, v in job.items() if k != "csv"}
                for job in self._jobs.values()
            ]


def _trial_response(resource: TrialResource) -> TrialResponse:
    return TrialResponse(
        id=resource.id,
        config=TrialConfigModel(**resource.config.to_json_dict()),
        state=TrialStateModel.from_state(resource.state),
        revision=resource.revision,
        created_at=resource.created_at,
        updated_at=resource.updated_at,
        finalized=resource.selection is not None,
        selection=(
            SelectionModel.from_selection(resource.selection)
            if resource.selection
            else None
        ),
    )


def _conflict(code: str, message: str) -> HTTPException:
    return HTTPException(status_code=409, detail={"code": code, "message": message})


def _get_or_404(store: TrialStore, tid: str) -> TrialResource:
    resource = store.get(tid)
    if resource is None:
        raise HTTPException(
            status_code=404,
            detail={"code": "not_found", "message": f"no trial {tid!r}"},
        )
    return resource


def create_app(data_dir) -> FastAPI:
    data_dir = Path(data_dir)
    store = TrialStore(data_dir / "trials")
    jobs = _SimulationJobs(data_dir / "simulations")

    app = FastAPI(
        title="keytrial",
        description=(
            "Keyboard dose-finding trial conduct: create a combination "
            "trial, record each cohort's DLT count, get the next dose "
            "recommendation, and finalize the MTD selection."
        ),
        version="0.1.0",
    )

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/trials", response_model=TrialResponse, status_code=201)
    def create_trial(
        body: TrialConfigModel,
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
        response: Response = None,
    ):
        resource, created = store.create(body.to_config(), idempotency_key)
        if not created and response is not None:
            response.status_code = 200
        return _trial_response(resource)

    @app.get("/trials", response_model=list[TrialSummary])
    def list_trials():
        return [
            TrialSummary(
                id=r.id,
                rows=r.config.rows,
                cols=r.config.cols,
                phi=r.config.phi,
                algorithm=r.config.algorithm,
                status=r.state.status.value,
                total_patients=r.state.total_patients,
                revision=r.revision,
                updated_at=r.updated_at,
            )
            for r in store.list()
        ]

    @app.get("/trials/{tid}", response_model=TrialResponse)
    def get_trial(tid: str):
        return _trial_response(_get_or_404(store, tid))

    @app.post("/trials/{tid}/cohorts", response_model=CohortResponse)
    def record_cohort(tid: str, body: CohortRequest):
        resource = _get_or_404(store, tid)
        with resource.lock:
            if body.expected_revision != resource.revision:
                raise _conflict(
                    "revision_conflict",
                    f"expected revision {body.expected_revision}, "
                    f"resource is at {resource.revision}",
                )
            if resource.state.status is not TrialStatus.ACTIVE:
                raise _conflict(
                    "trial_not_active",
                    f"trial is {resource.state.status.value}",
                )
            if body.dlt_count > resource.config.cohort_size:
                raise HTTPException(
                    status_code=422,
                    detail={
                        "code": "dlt_out_of_range",
                        "message": (
                            f"dlt_count={body.dlt_count} exceeds cohort size "
                            f"{resource.config.cohort_size}"
                        ),
                    },
                )
            draws = _RecordingDraws(
                np.random.default_rng(
                    np.random.SeedSequence(
                        resource.seed, spawn_key=(1, resource.revision)
                    )
                )
            )
            try:
                resource.engine.apply_cohort(resource.state, body.dlt_count, draws)
            except TrialStateError as exc:
                raise _conflict("trial_state", str(exc))
            store.record_cohort(resource, body.dlt_count, draws.log)
            rec = resource.state.history[-1]
            return CohortResponse(
                trial=_trial_response(resource),
                decision=rec.decision.value if rec.decision else None,
                next_dose=list(rec.next_dose) if rec.next_dose else None,
                newly_eliminated=[list(d) for d in rec.newly_eliminated],
                status=resource.state.status.value,
            )

    @app.post("/trials/{tid}/finalize", response_model=FinalizeResponse)
    def finalize(tid: str, body: FinalizeRequest):
        resource = _get_or_404(store, tid)
        with resource.lock:
            if resource.selection is not None:
                return FinalizeResponse(
                    trial=_trial_response(resource),
                    selection=SelectionModel.from_selection(resource.selection),
                )
            if resource.state.status is TrialStatus.ACTIVE:
                if not body.force:
                    raise _conflict(
                        "trial_active",
                        "trial is still active; pass force=true to close it "
                        "at the current sample size",
                    )
                if resource.state.total_patients == 0:
                    raise _conflict(
                        "no_data", "cannot finalize a trial with no treated patients"
                    )
                resource.engine.force_complete(resource.state)
                store.record_force_complete(resource)
            draws = _RecordingDraws(
                np.random.default_rng(
                    np.random.SeedSequence(resource.seed, spawn_key=(2,))
                )
            )
            selection = resource.engine.select_mtd(resource.state, draws)
            store.record_finalized(resource, selection, draws.log)
            return FinalizeResponse(
                trial=_trial_response(resource),
                selection=SelectionModel.from_selection(selection),
            )

    @app.get("/trials/{tid}/decision-table", response_model=DecisionTableResponse)
    def decision_table(tid: str, n_max: int | None = None):
        resource = _get_or_404(store, tid)
        cfg = resource.config
        table = build_decision_table(
            cfg.phi, cfg.eps1, cfg.eps2, n_max or cfg.max_n
        )
        return DecisionTableResponse(**table.to_json_dict())

    @app.post("/simulations", response_model=SimulationCreated, status_code=202)
    def submit_simulation(body: dict):
        try:
            spec = SimSpec.from_json_dict(body)
        except SpecValidationError as exc:
            raise HTTPException(
                status_code=422,
                detail={"code": "invalid_spec", "message": str(exc)},
            )
        return SimulationCreated(id=jobs.submit(spec), status="queued")

    @app.get("/simulations", response_model=list[SimulationStatus])
    def list_simulations():
        return [SimulationStatus(**j) for j in jobs.list()]

    @app.get("/simulations/{job_id}", response_model=SimulationStatus)
    def simulation_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(
                status_code=404,
                detail={"code": "not_found", "message": f"no simulation {job_id!r}"},
            )
        return SimulationStatus(
            id=job["id"], status=job["status"], error=job["error"],
            metrics=job["metrics"],
        )

    @app.get("/simulations/{job_id}/summary.csv")
    def simulation_csv(job_id: str):
        job = jobs.get(job_id)
        if job is None or job.get("csv") is None:
            raise HTTPException(
                status_code=404,
                detail={"code": "not_found", "message": "no finished simulation"},
            )
        return Response(content=job["csv"], media_type="text/csv")

    @app.get("/schema")
    def schema():
        return {
            "trial_config": TrialConfigModel.model_json_schema(),
            "trial": TrialResponse.model_json_schema(),
            "cohort_request": CohortRequest.model_json_schema(),
            "cohort_response": CohortResponse.model_json_schema(),
            "finalize_response": FinalizeResponse.model_json_schema(),
            "decision_table": DecisionTableResponse.model_json_schema(),
            "simulation_status": SimulationStatus.model_json_schema(),
        }

    return app
