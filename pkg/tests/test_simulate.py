"""Monte Carlo study engine tests: determinism, metrics, exports."""

import json

import numpy as np
import pytest

from keytrial.scenarios import GeneratorConfig, ScenarioExhaustedError, ToxScenario
from keytrial.simulate import (
    SimSpec,
    SpecValidationError,
    StudyMetrics,
    run_study,
    simulate_trial,
    study_json_doc,
    summary_csv,
    trial_rngs,
)
from keytrial.trial import TrialConfig, TrialEngine


def small_spec(**kw):
    base = dict(
        trial=TrialConfig(
            rows=2, cols=4, phi=0.3, eps1=0.05, eps2=0.05, max_n=24, cohort_size=1
        ),
        generator=GeneratorConfig(2, 4, 0.3, 0.05, 0.05, target_mtd_count=2),
        n_scenarios=20,
        trials_per_scenario=10,
        master_seed=314,
    )
    base.update(kw)
    return SimSpec(**base)


class TestSimulateTrial:
    def test_deterministic_for_same_seeds(self):
        engine = TrialEngine(
            TrialConfig(rows=2, cols=2, phi=0.3, eps1=0.05, eps2=0.05, max_n=12)
        )
        scenario = ToxScenario(((0.1, 0.3), (0.3, 0.5)), (1, 2), 0.3)
        runs = []
        for _ in range(2):
            out_rng, dec_rng = trial_rngs(42, 0, 0)
            runs.append(simulate_trial(engine, scenario, out_rng, dec_rng))
        assert runs[0] == runs[1]

    def test_highly_toxic_start_stops_for_safety(self):
        engine = TrialEngine(
            TrialConfig(rows=2, cols=2, phi=0.2, eps1=0.05, eps2=0.05, max_n=20)
        )
        scenario = ToxScenario(((0.99, 0.995), (0.995, 0.999)), (1, 1), 0.2)
        stops = 0
        for t in range(1000):
            out_rng, dec_rng = trial_rngs(7, 0, t)
            rec = simulate_trial(engine, scenario, out_rng, dec_rng, trial_index=t)
            stops += rec.status == "stopped_safety"
        assert stops / 1000 > 0.95

    def test_trivial_1x1_selects_its_only_dose(self):
        engine = TrialEngine(
            TrialConfig(rows=1, cols=1, phi=0.3, eps1=0.05, eps2=0.05, max_n=12)
        )
        scenario = ToxScenario(((0.3,),), (1, 1), 0.3)
        for t in range(50):
            out_rng, dec_rng = trial_rngs(5, 0, t)
            rec = simulate_trial(engine, scenario, out_rng, dec_rng, trial_index=t)
            if rec.status == "completed":
                assert rec.selected == (1, 1)
            else:
                assert rec.selected is None

    def test_patient_count_conservation(self):
        engine = TrialEngine(
            TrialConfig(rows=2, cols=3, phi=0.25, eps1=0.05, eps2=0.05, max_n=18)
        )
        scenario = ToxScenario(
            ((0.05, 0.15, 0.25), (0.15, 0.25, 0.4)), (1, 3), 0.25
        )
        for t in range(30):
            out_rng, dec_rng = trial_rngs(11, 0, t)
            rec = simulate_trial(engine, scenario, out_rng, dec_rng, trial_index=t)
            assert sum(sum(r) for r in rec.dose_patients) == rec.n_patients


class TestRunStudy:
    def test_metrics_partition_patients(self):
        result = run_study(small_spec())
        m = result.metrics
        assert m.pca + m.overdose_pct + m.underdose_pct == pytest.approx(
            100.0, abs=1e-9
        )
        for row in m.per_scenario:
            assert row.pca + row.overdose_pct + row.underdose_pct == pytest.approx(
                100.0, abs=1e-9
            )
        assert 0.0 <= m.pcs <= 100.0
        assert m.incoherent_escalation_pct == 0.0

    def test_every_dose_in_band_gives_full_pca(self):
        scenario = ToxScenario(((0.27, 0.3), (0.3, 0.33)), (1, 2), 0.3)
        spec = SimSpec(
            trial=TrialConfig(
                rows=2, cols=2, phi=0.3, eps1=0.05, eps2=0.05, max_n=12
            ),
            explicit_scenarios=[scenario],
            n_scenarios=1,
            trials_per_scenario=40,
            master_seed=1,
        )
        m = run_study(spec).metrics
        assert m.pca == pytest.approx(100.0, abs=1e-12)
        assert m.overdose_pct == 0.0 and m.underdose_pct == 0.0
        assert m.pcs == pytest.approx(100.0 - m.safety_stop_pct, abs=1e-9)

    def test_same_seed_reproduces_bytes(self):
        a = summary_csv(run_study(small_spec()).metrics)
        b = summary_csv(run_study(small_spec()).metrics)
        assert a == b

    def test_thread_count_does_not_change_results(self):
        a = summary_csv(run_study(small_spec(), threads=1).metrics)
        b = summary_csv(run_study(small_spec(), threads=4).metrics)
        assert a == b

    def test_records_collected_when_requested(self):
        result = run_study(small_spec(n_scenarios=3, trials_per_scenario=5),
                           keep_records=True)
        assert len(result.records) == 15
        assert result.records[0].scenario_id == 0

    def test_generator_exhaustion_propagates(self):
        spec = SimSpec(
            trial=TrialConfig(
                rows=1, cols=1, phi=0.3, eps1=0.05, eps2=0.05, max_n=6
            ),
            generator=GeneratorConfig(
                1, 1, 0.3, 0.05, 0.05, target_mtd_count=2, max_attempts=5
            ),
            n_scenarios=2,
            trials_per_scenario=2,
            master_seed=0,
        )
        with pytest.raises(ScenarioExhaustedError):
            run_study(spec)

    def test_spec_validation(self):
        with pytest.raises(SpecValidationError):
            small_spec(n_scenarios=0).validate()
        with pytest.raises(SpecValidationError):
            small_spec(
                generator=GeneratorConfig(3, 3, 0.3, 0.05, 0.05)
            ).validate()
        with pytest.raises(SpecValidationError):
            SimSpec(
                trial=TrialConfig(
                    rows=2, cols=2, phi=0.3, eps1=0.05, eps2=0.05, max_n=6
                ),
                n_scenarios=1,
                master_seed=0,
            ).validate()


class TestExports:
    def test_summary_csv_header_and_rows(self):
        result = run_study(small_spec(n_scenarios=2, trials_per_scenario=4))
        text = summary_csv(result.metrics)
        lines = text.splitlines()
        assert lines[0] == (
            "scenario_id,pcs,pca,overdose_pct,underdose_pct,"
            "incoherent_pct,safety_stop_pct"
        )
        assert len(lines) == 4  # header + 2 scenarios + overall
        assert lines[-1].startswith("overall,")

    def test_json_round_trip(self):
        spec = small_spec(n_scenarios=2, trials_per_scenario=4)
        result = run_study(spec)
        doc = study_json_doc(spec, result.metrics)
        parsed = json.loads(json.dumps(doc))
        metrics = StudyMetrics.from_json_dict(parsed["metrics"])
        assert metrics == result.metrics
        assert SimSpec.from_json_dict(parsed["spec"]).to_json_dict() == parsed["spec"]

    def test_spec_json_round_trip_with_explicit_scenarios(self):
        scenario = ToxScenario(((0.1, 0.3),), (1, 2), 0.3)
        spec = SimSpec(
            trial=TrialConfig(
                rows=1, cols=2, phi=0.3, eps1=0.05, eps2=0.05, max_n=8
            ),
            explicit_scenarios=[scenario],
            n_scenarios=1,
            trials_per_scenario=3,
            master_seed=9,
        )
        doc = spec.to_json_dict()
        back = SimSpec.from_json_dict(doc)
        assert back.explicit_scenarios == [scenario]
        assert back.to_json_dict() == doc
