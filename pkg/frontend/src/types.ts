// Wire types mirroring the trial service's JSON responses.

export interface TrialConfig {
  rows: number;
  cols: number;
  phi: number;
  eps1: number;
  eps2: number;
  max_n: number;
  cohort_size: number;
  cutoff: number;
  algorithm: "key1" | "key2" | "key3" | "key4" | "key5";
  seed: number | null;
}

export interface HistoryRecord {
  dose: [number, number];
  dlt: number;
  decision: string | null;
  next: [number, number] | null;
  draws: number[];
  eliminated: [number, number][];
}

export interface TrialState {
  version: number;
  rows: number;
  cols: number;
  n: number[][];
  y: number[][];
  current: [number, number];
  eliminated: [number, number][];
  status: "active" | "stopped_safety" | "completed";
  history: HistoryRecord[];
  total_patients: number;
  n_escalations: number;
  n_incoherent_escalations: number;
}

export interface Selection {
  selected: [number, number] | null;
  estimates: (number | null)[][];
  reason: string | null;
}

export interface TrialResource {
  id: string;
  config: TrialConfig;
  state: TrialState;
  revision: number;
  created_at: string;
  updated_at: string;
  finalized: boolean;
  selection: Selection | null;
}

export interface TrialSummary {
  id: string;
  rows: number;
  cols: number;
  phi: number;
  algorithm: string;
  status: string;
  total_patients: number;
  revision: number;
  updated_at: string;
}

export interface CohortResponse {
  trial: TrialResource;
  decision: string | null;
  next_dose: [number, number] | null;
  newly_eliminated: [number, number][];
  status: string;
}

export interface FinalizeResponse {
  trial: TrialResource;
  selection: Selection;
}

export interface DecisionTableRow {
  n: number;
  escalate_le: number;
  deescalate_ge: number;
}

export interface DecisionTable {
  phi: number;
  eps1: number;
  eps2: number;
  n_max: number;
  rows: DecisionTableRow[];
}

export interface StudyMetrics {
  pcs: number;
  pca: number;
  overdose_pct: number;
  underdose_pct: number;
  incoherent_escalation_pct: number;
  safety_stop_pct: number;
  n_scenarios: number;
  trials_per_scenario: number;
  per_scenario: {
    scenario_id: number;
    pcs: number;
    pca: number;
    overdose_pct: number;
    underdose_pct: number;
    incoherent_pct: number;
    safety_stop_pct: number;
  }[];
}

export interface SimulationStatus {
  id: string;
  status: "queued" | "running" | "done" | "failed";
  error: string | null;
  metrics: StudyMetrics | null;
}
