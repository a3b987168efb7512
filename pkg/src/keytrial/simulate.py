"""Monte Carlo operating-characteristics engine.

Simulates many trials over fixed or randomly generated toxicity
scenarios and aggregates the usual metrics:

* PCS - percent of trials selecting a dose whose true toxicity lies in
  [phi - eps1, phi + eps2] (safety-stopped trials count as incorrect);
* PCA / overdose / underdose - percent of treated patients at doses
  whose true toxicity is inside the acceptable band, above it, or
  below it;
* incoherent escalation percent - escalation decisions taken while the
  observed toxicity rate at the current dose exceeded phi (always zero
  for the keyboard rule; enforced as a hard check, not just reported);
* safety-stop percent.

Percentages are computed per scenario first and then averaged across
scenarios. Every random stream is derived from the master seed and the
(scenario, trial) indices through ``numpy.random.SeedSequence`` spawn
keys, so results are independent of scheduling and worker count:
scenario generation uses spawn key (1, s); trial s,t uses (2, s, t, 0)
for patient outcomes and (2, s, t, 1) for transition draws.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .scenarios import (
    GeneratorConfig,
    ScenarioExhaustedError,
    ToxScenario,
    generate_with_mtd_count,
)
from .trial import TrialConfig, TrialEngine, TrialStatus

SPEC_SCHEMA_VERSION = 1

SUMMARY_CSV_HEADER = (
    "scenario_id,pcs,pca,overdose_pct,underdose_pct,incoherent_pct,safety_stop_pct"
)


class SpecValidationError(ValueError):
    pass


@dataclass
class SimSpec:
    """A full study: trial configuration plus a scenario source."""

    trial: TrialConfig
    n_scenarios: int
    trials_per_scenario: int = 100
    master_seed: int = 0
    generator: GeneratorConfig | None = None
    explicit_scenarios: list[ToxScenario] | None = None

    def validate(self) -> None:
        try:
            self.trial.validate()
        except ValueError as exc:
            raise SpecValidationError(f"trial: {exc}") from exc
        if (self.generator is None) == (self.explicit_scenarios is None):
            raise SpecValidationError(
                "exactly one of generator / explicit scenarios is required"
            )
        if self.n_scenarios < 1 or self.trials_per_scenario < 1:
            raise SpecValidationError(
                "n_scenarios and trials_per_scenario must be >= 1"
            )
        if self.generator is not None:
            try:
                self.generator.validate()
            except ValueError as exc:
                raise SpecValidationError(f"generator: {exc}") from exc
            if (self.generator.rows, self.generator.cols) != (
                self.trial.rows,
                self.trial.cols,
            ):
                raise SpecValidationError(
                    "generator matrix shape must match the trial's"
                )
        else:
            if len(self.explicit_scenarios) != self.n_scenarios:
                raise SpecValidationError(
                    "n_scenarios must equal the number of explicit scenarios"
                )
            for i, sc in enumerate(self.explicit_scenarios):
                if (sc.rows, sc.cols) != (self.trial.rows, self.trial.cols):
                    raise SpecValidationError(
                        f"scenario {i} shape differs from the trial's"
                    )

    def to_json_dict(self) -> dict:
        doc: dict = {
            "version": SPEC_SCHEMA_VERSION,
            "trial": self.trial.to_json_dict(),
            "n_scenarios": self.n_scenarios,
            "trials_per_scenario": self.trials_per_scenario,
            "master_seed": self.master_seed,
        }
        if self.generator is not None:
            g = self.generator
            doc["scenarios"] = {
                "generator": {
                    "rows": g.rows,
                    "cols": g.cols,
                    "phi": g.phi,
                    "eps1": g.eps1,
                    "eps2": g.eps2,
                    "target_mtd_count": g.target_mtd_count,
                    "max_attempts": g.max_attempts,
                    "pmax_fixed_at_mean": g.pmax_fixed_at_mean,
                }
            }
        else:
            doc["scenarios"] = {
                "explicit": [sc.to_json_dict() for sc in self.explicit_scenarios]
            }
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SimSpec":
        try:
            version = int(doc.get("version", 0))
            if version != SPEC_SCHEMA_VERSION:
                raise SpecValidationError(f"unsupported spec version {version}")
            trial = TrialConfig.from_json_dict(doc["trial"])
            source = doc["scenarios"]
            generator = None
            explicit = None
            if "generator" in source:
                g = source["generator"]
                generator = GeneratorConfig(
                    rows=int(g["rows"]),
                    cols=int(g["cols"]),
                    phi=float(g["phi"]),
                    eps1=float(g["eps1"]),
                    eps2=float(g["eps2"]),
                    target_mtd_count=(
                        None
                        if g.get("target_mtd_count") is None
                        else int(g["target_mtd_count"])
                    ),
                    max_attempts=int(g.get("max_attempts", 10_000)),
                    pmax_fixed_at_mean=bool(g.get("pmax_fixed_at_mean", False)),
                )
            elif "explicit" in source:
                explicit = [
                    ToxScenario.from_json_dict(s) for s in source["explicit"]
                ]
            else:
                raise SpecValidationError("scenarios needs 'generator' or 'explicit'")
            spec = cls(
                trial=trial,
                n_scenarios=int(doc["n_scenarios"]),
                trials_per_scenario=int(doc.get("trials_per_scenario", 100)),
                master_seed=int(doc.get("master_seed", 0)),
                generator=generator,
                explicit_scenarios=explicit,
            )
        except SpecValidationError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecValidationError(f"malformed spec: {exc}") from exc
        spec.validate()
        return spec


@dataclass
class TrialRecord:
    scenario_id: int
    trial_index: int
    selected: tuple[int, int] | None
    status: str
    dose_patients: list[list[int]]
    n_patients: int
    n_escalations: int
    n_incoherent_escalations: int

    def to_json_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "trial_index": self.trial_index,
            "selected": list(self.selected) if self.selected else None,
            "status": self.status,
            "dose_patients": self.dose_patients,
            "n_patients": self.n_patients,
            "n_escalations": self.n_escalations,
            "n_incoherent_escalations": self.n_incoherent_escalations,
        }


@dataclass
class ScenarioMetrics:
    scenario_id: int
    pcs: float
    pca: float
    overdose_pct: float
    underdose_pct: float
    incoherent_pct: float
    safety_stop_pct: float

    def to_json_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "pcs": self.pcs,
            "pca": self.pca,
            "overdose_pct": self.overdose_pct,
            "underdose_pct": self.underdose_pct,
            "incoherent_pct": self.incoherent_pct,
            "safety_stop_pct": self.safety_stop_pct,
        }


@dataclass
class StudyMetrics:
    pcs: float
    pca: float
    overdose_pct: float
    underdose_pct: float
    incoherent_escalation_pct: float
    safety_stop_pct: float
    n_scenarios: int
    trials_per_scenario: int
    per_scenario: list[ScenarioMetrics]

    def to_json_dict(self) -> dict:
        return {
            "pcs": self.pcs,
            "pca": self.pca,
            "overdose_pct": self.overdose_pct,
            "underdose_pct": self.underdose_pct,
            "incoherent_escalation_pct": self.incoherent_escalation_pct,
            "safety_stop_pct": self.safety_stop_pct,
            "n_scenarios": self.n_scenarios,
            "trials_per_scenario": self.trials_per_scenario,
            "per_scenario": [m.to_json_dict() for m in self.per_scenario],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "StudyMetrics":
        return cls(
            pcs=doc["pcs"],
            pca=doc["pca"],
            overdose_pct=doc["overdose_pct"],
            underdose_pct=doc["underdose_pct"],
            incoherent_escalation_pct=doc["incoherent_escalation_pct"],
            safety_stop_pct=doc["safety_stop_pct"],
            n_scenarios=doc["n_scenarios"],
            trials_per_scenario=doc["trials_per_scenario"],
            per_scenario=[ScenarioMetrics(**m) for m in doc["per_scenario"]],
        )


@dataclass
class StudyResult:
    metrics: StudyMetrics
    records: list[TrialRecord] | None = None


# -- seed derivation ----------------------------------------------------------


def scenario_rng(master_seed: int, scenario_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(1, scenario_index))
    )


def trial_rngs(
    master_seed: int, scenario_index: int, trial_index: int
) -> tuple[np.random.Generator, np.random.Generator]:
    outcome = np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(2, scenario_index, trial_index, 0))
    )
    decision = np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(2, scenario_index, trial_index, 1))
    )
    return outcome, decision


# -- single trial --------------------------------------------------------------


def simulate_trial(
    engine: TrialEngine,
    scenario: ToxScenario,
    outcome_rng,
    decision_rng,
    scenario_id: int = 0,
    trial_index: int = 0,
    record_history: bool = False,
) -> TrialRecord:
    """Run one trial to termination; deterministic given the two streams.

    Patient outcomes consume one uniform each, in treatment order, from
    ``outcome_rng``; all transition randomness comes from
    ``decision_rng``.
    """
    cfg = engine.config
    state = engine.new_state(record_history=record_history)
    u = outcome_rng.random(cfg.max_n)
    i = 0
    probs = scenario.probs
    cohort = cfg.cohort_size
    while (
        state.status is TrialStatus.ACTIVE
        and state.total_patients + cohort <= cfg.max_n
    ):
        j, k = state.current
        p = probs[j - 1][k - 1]
        dlt = 0
        for _ in range(cohort):
            if u[i] < p:
                dlt += 1
            i += 1
        engine.apply_cohort(state, dlt, decision_rng)
    if state.status is TrialStatus.ACTIVE:
        engine.force_complete(state)

    if state.status is TrialStatus.COMPLETED:
        selection = engine.select_mtd(state, decision_rng)
        selected = selection.selected
    else:
        selected = None
    return TrialRecord(
        scenario_id=scenario_id,
        trial_index=trial_index,
        selected=selected,
        status=state.status.value,
        dose_patients=[list(r) for r in state.n],
        n_patients=state.total_patients,
        n_escalations=state.n_escalations,
        n_incoherent_escalations=state.n_incoherent_escalations,
    )


# -- study -----------------------------------------------------------------


def _band_codes(scenario: ToxScenario, phi: float, eps1: float, eps2: float):
    """-1 below the acceptable band, 0 inside it, +1 above it, per dose."""
    lo, hi = phi - eps1, phi + eps2
    return [
        [(-1 if p < lo else (1 if p > hi else 0)) for p in row]
        for row in scenario.probs
    ]


def _scenario_for(spec: SimSpec, scenario_index: int) -> ToxScenario:
    if spec.explicit_scenarios is not None:
        return spec.explicit_scenarios[scenario_index]
    rng = scenario_rng(spec.master_seed, scenario_index)
    return generate_with_mtd_count(spec.generator, rng)


_worker_engines: dict[tuple, TrialEngine] = {}


def _engine_for(trial: TrialConfig) -> TrialEngine:
    key = (
        trial.rows,
        trial.cols,
        trial.phi,
        trial.eps1,
        trial.eps2,
        trial.max_n,
        trial.cohort_size,
        trial.cutoff,
        trial.algorithm,
    )
    engine = _worker_engines.get(key)
    if engine is None:
        engine = TrialEngine(trial)
        _worker_engines[key] = engine
    return engine


def _run_scenario(spec: SimSpec, scenario_index: int, keep_records: bool):
    engine = _engine_for(spec.trial)
    scenario = _scenario_for(spec, scenario_index)
    band = _band_codes(scenario, spec.trial.phi, spec.trial.eps1, spec.trial.eps2)

    trials = spec.trials_per_scenario
    correct = 0
    stops = 0
    patients_band = 0
    patients_over = 0
    patients_under = 0
    patients_total = 0
    escalations = 0
    incoherent = 0
    records = [] if keep_records else None
    for t in range(trials):
        out_rng, dec_rng = trial_rngs(spec.master_seed, scenario_index, t)
        rec = simulate_trial(engine, scenario, out_rng, dec_rng, scenario_index, t)
        if rec.selected is not None:
            j, k = rec.selected
            if band[j - 1][k - 1] == 0:
                correct += 1
        if rec.status == TrialStatus.STOPPED_SAFETY.value:
            stops += 1
        for j in range(spec.trial.rows):
            for k in range(spec.trial.cols):
                cnt = rec.dose_patients[j][k]
                if cnt:
                    if band[j][k] == 0:
                        patients_band += cnt
                    elif band[j][k] > 0:
                        patients_over += cnt
                    else:
                        patients_under += cnt
        patients_total += rec.n_patients
        escalations += rec.n_escalations
        incoherent += rec.n_incoherent_escalations
        if keep_records:
            records.append(rec)

    metrics = ScenarioMetrics(
        scenario_id=scenario_index,
        pcs=100.0 * correct / trials,
        pca=100.0 * patients_band / patients_total,
        overdose_pct=100.0 * patients_over / patients_total,
        underdose_pct=100.0 * patients_under / patients_total,
        incoherent_pct=(100.0 * incoherent / escalations) if escalations else 0.0,
        safety_stop_pct=100.0 * stops / trials,
    )
    return metrics, incoherent, records


def _scenario_task(args):
    spec_doc, scenario_index, keep_records = args
    spec = SimSpec.from_json_dict(spec_doc)
    return _run_scenario(spec, scenario_index, keep_records)


def run_study(spec: SimSpec, threads: int = 1, keep_records: bool = False) -> StudyResult:
    """Run the whole study; results do not depend on ``threads``.

    Raises SpecValidationError for a bad spec and propagates
    ScenarioExhaustedError from the generator. A non-zero incoherent
    escalation count anywhere aborts the run: the transition rule
    guarantees zero, so a hit means a defect, not a metric.
    """
    spec.validate()
    indices = range(spec.n_scenarios)
    if threads <= 1 or spec.n_scenarios == 1:
        outcomes = [_run_scenario(spec, s, keep_records) for s in indices]
    else:
        spec_doc = spec.to_json_dict()
        args = [(spec_doc, s, keep_records) for s in indices]
        chunk = max(1, spec.n_scenarios // (threads * 8))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_scenario_task, args, chunksize=chunk))

    total_incoherent = sum(inc for _, inc, _ in outcomes)
    if total_incoherent:
        raise RuntimeError(
            f"{total_incoherent} incoherent escalations recorded; "
            "the transition rule must never escalate above the target rate"
        )

    per_scenario = [m for m, _, _ in outcomes]
    records = None
    if keep_records:
        records = [r for _, _, recs in outcomes for r in recs]

    def mean(attr: str) -> float:
        return sum(getattr(m, attr) for m in per_scenario) / len(per_scenario)

    metrics = StudyMetrics(
        pcs=mean("pcs"),
        pca=mean("pca"),
        overdose_pct=mean("overdose_pct"),
        underdose_pct=mean("underdose_pct"),
        incoherent_escalation_pct=mean("incoherent_pct"),
        safety_stop_pct=mean("safety_stop_pct"),
        n_scenarios=spec.n_scenarios,
        trials_per_scenario=spec.trials_per_scenario,
        per_scenario=per_scenario,
    )
    return StudyResult(metrics=metrics, records=records)


# -- export ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def summary_csv(metrics: StudyMetrics) -> str:
    """Per-scenario rows plus one 'overall' summary row; byte-stable."""
    lines = [SUMMARY_CSV_HEADER]
    for m in metrics.per_scenario:
        lines.append(
            ",".join(
                [
                    str(m.scenario_id),
                    _fmt(m.pcs),
                    _fmt(m.pca),
                    _fmt(m.overdose_pct),
                    _fmt(m.underdose_pct),
                    _fmt(m.incoherent_pct),
                    _fmt(m.safety_stop_pct),
                ]
            )
        )
    lines.append(
        ",".join(
            [
                "overall",
                _fmt(metrics.pcs),
                _fmt(metrics.pca),
                _fmt(metrics.overdose_pct),
                _fmt(metrics.underdose_pct),
                _fmt(metrics.incoherent_escalation_pct),
                _fmt(metrics.safety_stop_pct),
            ]
        )
    )
    return "\n".join(lines) + "\n"


def study_json_doc(
    spec: SimSpec, metrics: StudyMetrics, records: list[TrialRecord] | None = None
) -> dict:
    doc = {"spec": spec.to_json_dict(), "metrics": metrics.to_json_dict()}
    if records is not None:
        doc["records"] = [r.to_json_dict() for r in records]
    return doc


def export_results(out_dir, spec: SimSpec, result: StudyResult) -> tuple[str, str]:
    """Write summary.csv and study.json under out_dir; returns their paths."""
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "summary.csv"
    json_path = out / "study.json"
    try:
        csv_path.write_text(summary_csv(result.metrics))
        json_path.write_text(
            json.dumps(study_json_doc(spec, result.metrics, result.records), indent=2)
            + "\n"
        )
    except OSError as exc:
        raise OSError(f"cannot write study outputs under {out}: {exc}") from exc
    return str(csv_path), str(json_path)
