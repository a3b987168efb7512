"""Append-only event-log persistence for trials.

Each trial owns one JSON-lines file: a ``created`` event carrying the
config and seed, then one event per mutation (``cohort``,
``force_complete``, ``finalized``). Loading a trial replays its events
through the engine with the recorded draws, so the reconstructed state
is exactly the state the server held when the events were written; a
snapshot written after each mutation is compared against the replay as
a corruption check (a snapshot lagging one event behind is tolerated:
that is the crash window between the two writes).
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from ..trial import (
    MtdSelection,
    ScriptedDraws,
    TrialConfig,
    TrialEngine,
    TrialState,
)


class StoreCorruptionError(RuntimeError):
    pass


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()) + "Z"


@dataclass
class TrialResource:
    id: str
    config: TrialConfig
    seed: int
    engine: TrialEngine
    state: TrialState
    revision: int
    created_at: str
    updated_at: str
    idempotency_key: str | None = None
    selection: MtdSelection | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class TrialStore:
    """Directory-backed registry of trials; one writer lock per trial."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._registry: dict[str, TrialResource] = {}
        self._by_idempotency: dict[str, str] = {}
        self._create_lock = threading.Lock()
        for path in sorted(self.data_dir.glob("*.events.jsonl")):
            resource = self._load(path)
            self._registry[resource.id] = resource
            if resource.idempotency_key:
                self._by_idempotency[resource.idempotency_key] = resource.id

    # -- paths ---------------------------------------------------------------

    def _events_path(self, tid: str) -> Path:
        return self.data_dir / f"{tid}.events.jsonl"

    def _snapshot_path(self, tid: str) -> Path:
        return self.data_dir / f"{tid}.snapshot.json"

    # -- event I/O -------------------------------------------------------------

    def _append_event(self, resource: TrialResource, event: dict) -> None:
        event = {**event, "ts": _now()}
        with self._events_path(resource.id).open("a") as fh:
            fh.write(json.dumps(event) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        resource.revision += 1
        resource.updated_at = event["ts"]
        self._write_snapshot(resource)

    def _write_snapshot(self, resource: TrialResource) -> None:
        doc = {
            "id": resource.id,
            "revision": resource.revision,
            "config": resource.config.to_json_dict(),
            "seed": resource.seed,
            "created_at": resource.created_at,
            "updated_at": resource.updated_at,
            "idempotency_key": resource.idempotency_key,
            "state": resource.state.to_json_dict(),
            "selection": (
                resource.selection.to_json_dict() if resource.selection else None
            ),
        }
        tmp = self._snapshot_path(resource.id).with_suffix(".tmp")
        tmp.write_text(json.dumps(doc))
        tmp.replace(self._snapshot_path(resource.id))

    def _load(self, events_path: Path) -> TrialResource:
        lines = [
            json.loads(line)
            for line in events_path.read_text().splitlines()
            if line.strip()
        ]
        if not lines or lines[0]["type"] != "created":
            raise StoreCorruptionError(f"{events_path}: missing created event")
        head = lines[0]
        config = TrialConfig.from_json_dict(head["config"])
        engine = TrialEngine(config)
        state = engine.new_state()
        resource = TrialResource(
            id=head["id"],
            config=config,
            seed=int(head["seed"]),
            engine=engine,
            state=state,
            revision=1,
            created_at=head["ts"],
            updated_at=head["ts"],
            idempotency_key=head.get("idempotency_key"),
        )
        for event in lines[1:]:
            kind = event["type"]
            if kind == "cohort":
                engine.apply_cohort(
                    state, int(event["dlt"]), ScriptedDraws(event["draws"])
                )
            elif kind == "force_complete":
                engine.force_complete(state)
            elif kind == "finalized":
                replayed = engine.select_mtd(state, ScriptedDraws(event["draws"]))
                stored = MtdSelection.from_json_dict(event["selection"])
                if replayed.selected != stored.selected:
                    raise StoreCorruptionError(
                        f"{events_path}: selection replay mismatch"
                    )
                resource.selection = stored
            else:
                raise StoreCorruptionError(f"{events_path}: unknown event {kind!r}")
            resource.revision += 1
            resource.updated_at = event["ts"]
        self._check_snapshot(resource)
        return resource

    def _check_snapshot(self, resource: TrialResource) -> None:
        path = self._snapshot_path(resource.id)
        if not path.exists():
            return
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise StoreCorruptionError(f"{path}: unreadable snapshot: {exc}") from exc
        if doc.get("revision") == resource.revision:
            if doc.get("state") != resource.state.to_json_dict():
                raise StoreCorruptionError(
                    f"{path}: snapshot disagrees with event replay"
                )
        elif doc.get("revision", 0) > resource.revision:
            raise StoreCorruptionError(
                f"{path}: snapshot ahead of event log "
                f"({doc.get('revision')} > {resource.revision})"
            )
        # a snapshot one mutation behind is the normal crash window; the
        # replayed state supersedes it
        self._write_snapshot(resource)

    # -- public API --------------------------------------------------------

    def create(
        self,
        config: TrialConfig,
        idempotency_key: str | None = None,
    ) -> tuple[TrialResource, bool]:
        """Create (or return the idempotent duplicate of) a trial."""
        with self._create_lock:
            if idempotency_key and idempotency_key in self._by_idempotency:
                return self._registry[self._by_idempotency[idempotency_key]], False
            tid = uuid.uuid4().hex[:12]
            seed = (
                config.seed
                if config.seed is not None
                else int.from_bytes(os.urandom(8), "big") >> 1
            )
            engine = TrialEngine(config)
            ts = _now()
            resource = TrialResource(
                id=tid,
                config=config,
                seed=seed,
                engine=engine,
                state=engine.new_state(),
                revision=0,
                created_at=ts,
                updated_at=ts,
                idempotency_key=idempotency_key,
            )
            with self._events_path(tid).open("w") as fh:
                fh.write(
                    json.dumps(
                        {
                            "type": "created",
                            "id": tid,
                            "config": config.to_json_dict(),
                            "seed": seed,
                            "idempotency_key": idempotency_key,
                            "ts": ts,
                        }
                    )
                    + "\n"
                )
                fh.flush()
                os.fsync(fh.fileno())
            resource.revision = 1
            self._write_snapshot(resource)
            self._registry[tid] = resource
            if idempotency_key:
                self._by_idempotency[idempotency_key] = tid
            return resource, True

    def get(self, tid: str) -> TrialResource | None:
        return self._registry.get(tid)

    def list(self) -> list[TrialResource]:
        return sorted(self._registry.values(), key=lambda r: r.created_at)

    def record_cohort(self, resource: TrialResource, dlt: int, draws) -> None:
        self._append_event(
            resource, {"type": "cohort", "dlt": dlt, "draws": list(draws)}
        )

    def record_force_complete(self, resource: TrialResource) -> None:
        self._append_event(resource, {"type": "force_complete"})

    def record_finalized(
        self, resource: TrialResource, selection: MtdSelection, draws
    ) -> None:
        resource.selection = selection
        self._append_event(
            resource,
            {
                "type": "finalized",
                "selection": selection.to_json_dict(),
                "draws": list(draws),
            },
        )
