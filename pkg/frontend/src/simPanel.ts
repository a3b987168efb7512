// Simulation panel: configure a study, submit it as a background job,
// poll until it finishes, then show the metric summary, a per-scenario
// accuracy histogram and a link to the server's CSV artifact.

import { ApiClient, pollSimulation } from "./api";
import { clear, h } from "./dom";
import type { StudyMetrics } from "./types";

const METRIC_COLUMNS: [keyof StudyMetrics, string][] = [
  ["pcs", "correct selection %"],
  ["pca", "correct assignment %"],
  ["overdose_pct", "overdose %"],
  ["underdose_pct", "underdose %"],
  ["safety_stop_pct", "safety stops %"],
];

export function buildSpec(values: Record<string, number | string>): unknown {
  const rows = Number(values.rows);
  const cols = Number(values.cols);
  const phi = Number(values.phi);
  const eps1 = Number(values.eps1);
  const eps2 = Number(values.eps2);
  return {
    version: 1,
    trial: {
      rows, cols, phi, eps1, eps2,
      max_n: Number(values.max_n),
      cohort_size: Number(values.cohort_size),
      cutoff: 0.95,
      algorithm: values.algorithm,
      seed: null,
    },
    scenarios: {
      generator: {
        rows, cols, phi, eps1, eps2,
        target_mtd_count: values.mtds === "" ? null : Number(values.mtds),
        pmax_fixed_at_mean: true,
      },
    },
    n_scenarios: Number(values.n_scenarios),
    trials_per_scenario: Number(values.trials_per_scenario),
    master_seed: Number(values.master_seed),
  };
}

export function renderMetricsTable(metrics: StudyMetrics): HTMLElement {
  const table = h("table", { class: "metrics", "data-testid": "metrics-table" });
  const head = h("tr", {});
  const body = h("tr", {});
  for (const [key, label] of METRIC_COLUMNS) {
    head.append(h("th", {}, label));
    body.append(h("td", { "data-metric": key },
      (metrics[key] as number).toFixed(2)));
  }
  table.append(head, body);
  return table;
}

export function renderHistogram(metrics: StudyMetrics): SVGElement {
  // distribution of per-scenario correct-selection rates, 10-point bins
  const bins = new Array<number>(10).fill(0);
  for (const row of metrics.per_scenario) {
    bins[Math.min(9, Math.floor(row.pcs / 10))] += 1;
  }
  const peak = Math.max(1, ...bins);
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", "0 0 200 60");
  svg.setAttribute("class", "pcs-hist");
  svg.dataset.testid = "pcs-histogram";
  bins.forEach((count, i) => {
    const rect = document.createElementNS("http://www.w3.org/2000/svg", "rect");
    const height = (count / peak) * 50;
    rect.setAttribute("x", String(i * 20 + 1));
    rect.setAttribute("y", String(55 - height));
    rect.setAttribute("width", "18");
    rect.setAttribute("height", String(height));
    svg.append(rect);
  });
  return svg;
}

const FORM_FIELDS: [string, string][] = [
  ["rows", "2"], ["cols", "4"], ["phi", "0.3"], ["eps1", "0.05"],
  ["eps2", "0.05"], ["max_n", "48"], ["cohort_size", "1"], ["mtds", "2"],
  ["n_scenarios", "50"], ["trials_per_scenario", "20"], ["master_seed", "1"],
];

export class SimPanel {
  constructor(private container: HTMLElement, private api: ApiClient) {}

  render(): void {
    const root = h("section", { class: "panel sim-panel" },
      h("h2", {}, "Operating characteristics"));
    const form = h("form", { "data-testid": "sim-form" });
    const inputs: Record<string, HTMLInputElement> = {};
    for (const [name, value] of FORM_FIELDS) {
      const input = h("input", { name, value, type: "text" });
      inputs[name] = input;
      form.append(h("label", { class: "field" }, name, input));
    }
    const algorithm = h("select", { name: "algorithm" });
    for (const alg of ["key1", "key2", "key3", "key4", "key5"]) {
      algorithm.append(h("option", { value: alg }, alg));
    }
    form.append(h("label", { class: "field" }, "algorithm", algorithm));
    const submit = h("button", { type: "submit" }, "Run study");
    const progress = h("p", { class: "muted", "data-testid": "sim-progress" });
    const results = h("div", { class: "sim-results" });
    form.append(submit);
    root.append(form, progress, results);

    form.addEventListener("submit", async (ev) => {
      ev.preventDefault();
      clear(results);
      progress.textContent = "submitting...";
      submit.setAttribute("disabled", "");
      try {
        const values: Record<string, string> = { algorithm: algorithm.value };
        for (const [name, input] of Object.entries(inputs)) {
          values[name] = input.value;
        }
        const { id } = await this.api.submitSimulation(buildSpec(values));
        progress.textContent = `job ${id}: queued`;
        const done = await pollSimulation(this.api, id, 400, (status) => {
          progress.textContent = `job ${id}: ${status.status}`;
        });
        progress.textContent = `job ${id}: done`;
        results.append(
          renderMetricsTable(done.metrics!),
          renderHistogram(done.metrics!),
          h("a", {
            href: this.api.simulationCsvUrl(id),
            download: "summary.csv",
            "data-testid": "csv-link",
          }, "Download per-scenario CSV"),
        );
      } catch (err) {
        progress.textContent = `failed: ${String(err)}`;
      } finally {
        submit.removeAttribute("disabled");
      }
    });
    clear(this.container).append(root);
  }
}
