// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import { buildSpec, renderHistogram, renderMetricsTable } from "../src/simPanel";
import type { StudyMetrics } from "../src/types";

const METRICS: StudyMetrics = {
  pcs: 51.2,
  pca: 44.3,
  overdose_pct: 27.8,
  underdose_pct: 27.9,
  incoherent_escalation_pct: 0,
  safety_stop_pct: 4.2,
  n_scenarios: 3,
  trials_per_scenario: 10,
  per_scenario: [
    { scenario_id: 0, pcs: 40, pca: 40, overdose_pct: 30, underdose_pct: 30,
      incoherent_pct: 0, safety_stop_pct: 0 },
    { scenario_id: 1, pcs: 55, pca: 45, overdose_pct: 30, underdose_pct: 25,
      incoherent_pct: 0, safety_stop_pct: 10 },
    { scenario_id: 2, pcs: 95, pca: 50, overdose_pct: 25, underdose_pct: 25,
      incoherent_pct: 0, safety_stop_pct: 0 },
  ],
};

describe("simulation panel pieces", () => {
  it("builds a versioned study spec from form values", () => {
    const spec = buildSpec({
      rows: "2", cols: "4", phi: "0.3", eps1: "0.05", eps2: "0.05",
      max_n: "48", cohort_size: "1", mtds: "2", n_scenarios: "10",
      trials_per_scenario: "5", master_seed: "7", algorithm: "key2",
    }) as Record<string, unknown>;
    expect(spec.version).toBe(1);
    expect((spec.trial as Record<string, unknown>).algorithm).toBe("key2");
    expect((spec.scenarios as Record<string, Record<string, unknown>>)
      .generator.target_mtd_count).toBe(2);
    expect(spec.n_scenarios).toBe(10);
  });

  it("renders the five metric columns", () => {
    const table = renderMetricsTable(METRICS);
    const cells = table.querySelectorAll("td[data-metric]");
    expect(cells.length).toBe(5);
    expect(table.querySelector("[data-metric=pcs]")!.textContent).toBe("51.20");
    expect(table.querySelector("[data-metric=safety_stop_pct]")!.textContent)
      .toBe("4.20");
  });

  it("bins per-scenario accuracy into a histogram", () => {
    const svg = renderHistogram(METRICS);
    const bars = svg.querySelectorAll("rect");
    expect(bars.length).toBe(10);
    // bins 4 (40-50), 5 (50-60) and 9 (90-100) hold one scenario each
    const heights = [...bars].map((b) => Number(b.getAttribute("height")));
    expect(heights.filter((v) => v > 0).length).toBe(3);
  });
});
