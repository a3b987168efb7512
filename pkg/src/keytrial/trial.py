"""Combination-trial state machine.

Runs a two-agent (J x K) dose-finding trial with the keyboard
transition rule; a single-agent trial is simply the 1 x K special case.
Five escalation/de-escalation variants are supported:

=========  ======================  ==========================
algorithm  escalation candidates   de-escalation candidates
=========  ======================  ==========================
key1       (j+1,k), (j,k+1)        (j-1,k), (j,k-1)
key2       (j+1,k), (j,k+1)        (j-1,k), (j,k-1), (j-1,k-1)
key3       + (j+1,k+1)             (j-1,k), (j,k-1), (j-1,k-1)
key4       (j+1,k), (j,k+1)        (j-1,k), (j,k-1)
key5       + (j+1,k+1)             (j-1,k), (j,k-1), (j-1,k-1)
=========  ======================  ==========================

key1-key3 move to the candidate with the highest posterior probability
of sitting in the target key (exact ties split uniformly at random);
key4 and key5 randomize over candidates with probabilities proportional
to those posterior probabilities.

A dose whose tally satisfies Pr(p > phi | data) >= cutoff is eliminated
together with every dose at least as high in both coordinates; the
trial stops for safety when (1, 1) itself is eliminated. Every random
draw taken during a transition is logged in the history record so a
trial replays bit-exactly from its event log.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .isotonic import WeightedMatrix, matrix_isotonic
from .keys import Decision, DesignTables, KeyPartition, build_keys

STATE_SCHEMA_VERSION = 1

ALGORITHMS = ("key1", "key2", "key3", "key4", "key5")
_DIAGONAL_ESCALATION = frozenset({"key3", "key5"})
_DIAGONAL_DEESCALATION = frozenset({"key2", "key3", "key5"})
_RANDOMIZED = frozenset({"key4", "key5"})

_TIE_TOL = 1e-12
_SELECTION_TIE_TOL = 1e-10
# Vague Beta(0.05, 0.05) shrinkage for the selection-stage estimate.
_SEL_PRIOR = 0.05


class TrialStateError(RuntimeError):
    """Operation not allowed in the trial's current status."""


class TrialStatus(str, Enum):
    ACTIVE = "active"
    STOPPED_SAFETY = "stopped_safety"
    COMPLETED = "completed"


class ScriptedDraws:
    """Replays a recorded sequence of uniform draws; errors when exhausted."""

    def __init__(self, values):
        self._values = list(values)
        self._pos = 0

    def random(self) -> float:
        if self._pos >= len(self._values):
            raise RuntimeError("scripted draw source exhausted")
        v = self._values[self._pos]
        self._pos += 1
        return v


@dataclass
class TrialConfig:
    rows: int
    cols: int
    phi: float
    eps1: float
    eps2: float
    max_n: int
    cohort_size: int = 1
    cutoff: float = 0.95
    algorithm: str = "key1"
    seed: int | None = None

    def validate(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        build_keys(self.phi, self.eps1, self.eps2)  # raises on a bad target key
        if not 0.0 < self.cutoff < 1.0:
            raise ValueError(f"cutoff={self.cutoff} outside (0, 1)")
        if self.cohort_size < 1:
            raise ValueError("cohort_size must be >= 1")
        if self.max_n < self.cohort_size:
            raise ValueError("max_n must be >= cohort_size")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")

    def to_json_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "phi": self.phi,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "max_n": self.max_n,
            "cohort_size": self.cohort_size,
            "cutoff": self.cutoff,
            "algorithm": self.algorithm,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrialConfig":
        return cls(
            rows=int(doc["rows"]),
            cols=int(doc["cols"]),
            phi=float(doc["phi"]),
            eps1=float(doc["eps1"]),
            eps2=float(doc["eps2"]),
            max_n=int(doc["max_n"]),
            cohort_size=int(doc.get("cohort_size", 1)),
            cutoff=float(doc.get("cutoff", 0.95)),
            algorithm=str(doc.get("algorithm", "key1")),
            seed=None if doc.get("seed") is None else int(doc["seed"]),
        )


@dataclass
class CohortRecord:
    """One treated cohort: where, what happened, and what was decided."""

    dose: tuple[int, int]
    dlt: int
    decision: Decision | None
    next_dose: tuple[int, int] | None
    draws: tuple[float, ...]
    newly_eliminated: tuple[tuple[int, int], ...]

    def to_json_dict(self) -> dict:
        return {
            "dose": list(self.dose),
            "dlt": self.dlt,
            "decision": self.decision.value if self.decision else None,
            "next": list(self.next_dose) if self.next_dose else None,
            "draws": list(self.draws),
            "eliminated": [list(d) for d in self.newly_eliminated],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CohortRecord":
        return cls(
            dose=(int(doc["dose"][0]), int(doc["dose"][1])),
            dlt=int(doc["dlt"]),
            decision=Decision(doc["decision"]) if doc.get("decision") else None,
            next_dose=tuple(doc["next"]) if doc.get("next") else None,
            draws=tuple(float(u) for u in doc.get("draws", ())),
            newly_eliminated=tuple(
                (int(d[0]), int(d[1])) for d in doc.get("eliminated", ())
            ),
        )


@dataclass
class TrialState:
    """Mutable trial state owned by a single caller at a time.

    ``apply_cohort`` evolves the instance in place and appends to
    ``history`` (unless history recording was turned off at creation);
    everything needed to rebuild the state lives in the history, so
    replaying it through a fresh state reproduces this one exactly.
    """

    rows: int
    cols: int
    n: list[list[int]]
    y: list[list[int]]
    current: tuple[int, int]
    eliminated: set[tuple[int, int]]
    status: TrialStatus
    history: list[CohortRecord] | None
    total_patients: int = 0
    n_escalations: int = 0
    n_incoherent_escalations: int = 0

    def tally(self, j: int, k: int) -> tuple[int, int]:
        return self.n[j - 1][k - 1], self.y[j - 1][k - 1]

    def to_json_dict(self) -> dict:
        return {
            "version": STATE_SCHEMA_VERSION,
            "rows": self.rows,
            "cols": self.cols,
            "n": [list(r) for r in self.n],
            "y": [list(r) for r in self.y],
            "current": list(self.current),
            "eliminated": sorted([list(d) for d in self.eliminated]),
            "status": self.status.value,
            "history": [h.to_json_dict() for h in (self.history or [])],
            "total_patients": self.total_patients,
            "n_escalations": self.n_escalations,
            "n_incoherent_escalations": self.n_incoherent_escalations,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrialState":
        version = int(doc.get("version", 0))
        if version != STATE_SCHEMA_VERSION:
            raise ValueError(f"unsupported trial state version {version}")
        return cls(
            rows=int(doc["rows"]),
            cols=int(doc["cols"]),
            n=[[int(v) for v in row] for row in doc["n"]],
            y=[[int(v) for v in row] for row in doc["y"]],
            current=(int(doc["current"][0]), int(doc["current"][1])),
            eliminated={(int(d[0]), int(d[1])) for d in doc["eliminated"]},
            status=TrialStatus(doc["status"]),
            history=[CohortRecord.from_json_dict(h) for h in doc["history"]],
            total_patients=int(doc["total_patients"]),
            n_escalations=int(doc["n_escalations"]),
            n_incoherent_escalations=int(doc["n_incoherent_escalations"]),
        )


@dataclass
class MtdSelection:
    """Final dose choice with the isotonic estimates behind it."""

    selected: tuple[int, int] | None
    estimates: list[list[float | None]]
    reason: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "selected": list(self.selected) if self.selected else None,
            "estimates": self.estimates,
            "reason": self.reason,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MtdSelection":
        sel = doc.get("selected")
        return cls(
            selected=(int(sel[0]), int(sel[1])) if sel else None,
            estimates=doc["estimates"],
            reason=doc.get("reason"),
        )


def admissible_escalation(
    coord: tuple[int, int],
    algorithm: str,
    rows: int,
    cols: int,
    eliminated=frozenset(),
) -> list[tuple[int, int]]:
    """In-bounds, non-eliminated escalation candidates, sorted by (j, k)."""
    j, k = coord
    cands = [(j + 1, k), (j, k + 1)]
    if algorithm in _DIAGONAL_ESCALATION:
        cands.append((j + 1, k + 1))
    return sorted(
        c
        for c in cands
        if c[0] <= rows and c[1] <= cols and c not in eliminated
    )


def admissible_deescalation(
    coord: tuple[int, int],
    algorithm: str,
    rows: int,
    cols: int,
    eliminated=frozenset(),
) -> list[tuple[int, int]]:
    """In-bounds, non-eliminated de-escalation candidates, sorted by (j, k)."""
    j, k = coord
    cands = [(j - 1, k), (j, k - 1)]
    if algorithm in _DIAGONAL_DEESCALATION:
        cands.append((j - 1, k - 1))
    return sorted(
        c for c in cands if c[0] >= 1 and c[1] >= 1 and c not in eliminated
    )


_tables_cache: dict[tuple, DesignTables] = {}


def design_tables(partition: KeyPartition, cutoff: float) -> DesignTables:
    key = (partition.phi, partition.eps1, partition.eps2, cutoff)
    tables = _tables_cache.get(key)
    if tables is None:
        tables = DesignTables(partition, cutoff)
        _tables_cache[key] = tables
    return tables


class TrialEngine:
    """Applies the transition rule of one trial configuration.

    Holds the (shared, lazily grown) boundary tables; all trial state
    lives in the TrialState values passed in. Draw sources only need a
    ``random()`` method returning uniforms on [0, 1).
    """

    def __init__(self, config: TrialConfig):
        config.validate()
        self.config = config
        self.partition = build_keys(config.phi, config.eps1, config.eps2)
        self.tables = design_tables(self.partition, config.cutoff)
        if config.max_n <= 128:
            self.tables.prefill(config.max_n)

    def new_state(self, record_history: bool = True) -> TrialState:
        c = self.config
        return TrialState(
            rows=c.rows,
            cols=c.cols,
            n=[[0] * c.cols for _ in range(c.rows)],
            y=[[0] * c.cols for _ in range(c.rows)],
            current=(1, 1),
            eliminated=set(),
            status=TrialStatus.ACTIVE,
            history=[] if record_history else None,
        )

    # -- transitions ---------------------------------------------------------

    def apply_cohort(self, state: TrialState, dlt_count: int, rng) -> TrialState:
        """Record one cohort's outcomes at the current dose and move.

        Mutates and returns ``state``. Raises TrialStateError when the
        trial is not active or the cohort would exceed max_n, and
        ValueError for an out-of-range DLT count.
        """
        cfg = self.config
        if state.status is not TrialStatus.ACTIVE:
            raise TrialStateError(f"trial is {state.status.value}, not active")
        if not 0 <= dlt_count <= cfg.cohort_size:
            raise ValueError(
                f"dlt_count={dlt_count} outside 0..{cfg.cohort_size}"
            )
        if state.total_patients + cfg.cohort_size > cfg.max_n:
            raise TrialStateError("cohort would exceed the maximum sample size")

        cur = state.current
        j, k = cur
        state.n[j - 1][k - 1] += cfg.cohort_size
        state.y[j - 1][k - 1] += dlt_count
        state.total_patients += cfg.cohort_size
        n_cur = state.n[j - 1][k - 1]
        y_cur = state.y[j - 1][k - 1]

        newly: tuple[tuple[int, int], ...] = ()
        if cur not in state.eliminated and y_cur >= self.tables.elim_min_dlt(n_cur):
            newly = self._eliminate_upward(state, cur)

        if (1, 1) in state.eliminated:
            state.status = TrialStatus.STOPPED_SAFETY
            if state.history is not None:
                state.history.append(
                    CohortRecord(cur, dlt_count, None, None, (), newly)
                )
            return state

        draws: list[float] = []
        if cur in state.eliminated:
            # the just-eliminated dose cannot be retained, so step down
            decision = Decision.DEESCALATE
        else:
            decision = self.tables.decide_counts(n_cur, y_cur)

        if decision is Decision.ESCALATE:
            state.n_escalations += 1
            if y_cur > cfg.phi * n_cur:
                state.n_incoherent_escalations += 1
            cands = admissible_escalation(
                cur, cfg.algorithm, cfg.rows, cfg.cols, state.eliminated
            )
            nxt = self._choose(cands, state, rng, draws) if cands else cur
        elif decision is Decision.DEESCALATE:
            cands = admissible_deescalation(
                cur, cfg.algorithm, cfg.rows, cfg.cols, state.eliminated
            )
            if cands:
                nxt = self._choose(cands, state, rng, draws)
            elif cur not in state.eliminated:
                nxt = cur
            else:
                # Unreachable: a dose whose whole lower neighbourhood is
                # eliminated is eliminated itself and never assigned.
                raise TrialStateError(
                    "eliminated current dose with no admissible de-escalation"
                )
        else:
            nxt = cur

        state.current = nxt
        if state.total_patients >= cfg.max_n:
            state.status = TrialStatus.COMPLETED
        if state.history is not None:
            state.history.append(
                CohortRecord(cur, dlt_count, decision, nxt, tuple(draws), newly)
            )
        return state

    def next_dose(self, state: TrialState, decision: Decision, rng) -> tuple[int, int]:
        """Dose for the next cohort given an already-computed decision."""
        cfg = self.config
        if decision is Decision.RETAIN:
            return state.current
        if decision is Decision.ESCALATE:
            cands = admissible_escalation(
                state.current, cfg.algorithm, cfg.rows, cfg.cols, state.eliminated
            )
        else:
            cands = admissible_deescalation(
                state.current, cfg.algorithm, cfg.rows, cfg.cols, state.eliminated
            )
        if not cands:
            return state.current
        return self._choose(cands, state, rng, [])

    def _eliminate_upward(self, state, coord) -> tuple[tuple[int, int], ...]:
        j0, k0 = coord
        newly = []
        for j in range(j0, state.rows + 1):
            for k in range(k0, state.cols + 1):
                if (j, k) not in state.eliminated:
                    state.eliminated.add((j, k))
                    newly.append((j, k))
        return tuple(newly)

    def _choose(self, cands, state, rng, draws: list[float]) -> tuple[int, int]:
        if len(cands) == 1:
            return cands[0]
        probs = [
            self.tables.target_key_prob(*state.tally(j, k)) for j, k in cands
        ]
        if self.config.algorithm in _RANDOMIZED:
            total = sum(probs)
            u = rng.random()
            draws.append(u)
            if total <= 0.0:
                return cands[int(u * len(cands))]
            r = u * total
            acc = 0.0
            for cand, p in zip(cands, probs):
                acc += p
                if r < acc:
                    return cand
            return cands[-1]
        best = max(probs)
        tied = [c for c, p in zip(cands, probs) if p >= best - _TIE_TOL]
        if len(tied) == 1:
            return tied[0]
        u = rng.random()
        draws.append(u)
        return tied[int(u * len(tied))]

    # -- termination and selection -------------------------------------------

    def force_complete(self, state: TrialState) -> TrialState:
        """Close an active trial at its current sample size."""
        if state.status is not TrialStatus.ACTIVE:
            raise TrialStateError(f"trial is {state.status.value}, not active")
        state.status = TrialStatus.COMPLETED
        return state

    def select_mtd(self, state: TrialState, rng) -> MtdSelection:
        """Isotonic-regression MTD selection over tried, non-eliminated doses.

        Raw per-dose estimates are posterior means under a vague
        Beta(0.05, 0.05) prior, (y + 0.05) / (n + 0.1), with weights
        n + 0.1; after projection onto the partial order the dose whose
        estimate is closest to phi wins, ties split uniformly at random.
        """
        if state.status is TrialStatus.ACTIVE:
            raise TrialStateError("trial still active; finish or force-complete it")
        none_grid: list[list[float | None]] = [
            [None] * state.cols for _ in range(state.rows)
        ]
        if state.status is TrialStatus.STOPPED_SAFETY:
            return MtdSelection(None, none_grid, reason="safety_stop")

        n = np.array(state.n, dtype=float)
        y = np.array(state.y, dtype=float)
        mask = n > 0
        for j, k in state.eliminated:
            mask[j - 1][k - 1] = False
        if not mask.any():
            raise TrialStateError("no tried, non-eliminated dose to select from")
        est = (y + _SEL_PRIOR) / (n + 2 * _SEL_PRIOR)
        fitted = matrix_isotonic(WeightedMatrix(est, n + 2 * _SEL_PRIOR, mask))

        cands = [
            (j + 1, k + 1)
            for j in range(state.rows)
            for k in range(state.cols)
            if mask[j, k]
        ]
        dists = [abs(fitted[j - 1, k - 1] - self.config.phi) for j, k in cands]
        best = min(dists)
        tied = [c for c, d in zip(cands, dists) if d <= best + _SELECTION_TIE_TOL]
        if len(tied) == 1:
            selected = tied[0]
        else:
            selected = tied[int(rng.random() * len(tied))]

        estimates = none_grid
        for j, k in cands:
            estimates[j - 1][k - 1] = float(fitted[j - 1, k - 1])
        return MtdSelection(selected, estimates)

    # -- replay ----------------------------------------------------------------

    def replay(self, records) -> TrialState:
        """Rebuild a state by re-applying recorded cohorts and their draws."""
        state = self.new_state(record_history=True)
        for rec in records:
            if rec.dose != state.current:
                raise TrialStateError(
                    f"history mismatch: recorded dose {rec.dose}, "
                    f"state expects {state.current}"
                )
            self.apply_cohort(state, rec.dlt, ScriptedDraws(rec.draws))
        return state
