// Live trial view: status banner, dose-matrix heatmap, cohort entry,
// the pre-tabulated decision boundaries, and finalization.
//
// Every decision and next-dose shown here is the server's response
// verbatim (the elements carrying data-testid expose the raw strings);
// the view recomputes nothing but display shading.

import { ApiClient, ApiError } from "./api";
import { clear, h } from "./dom";
import { renderHeatmap } from "./heatmap";
import type {
  CohortResponse,
  DecisionTable,
  Selection,
  TrialResource,
} from "./types";

function statusBanner(trial: TrialResource): HTMLElement {
  const status = trial.state.status;
  if (status === "stopped_safety") {
    return h(
      "div",
      { class: "banner banner-stop", "data-testid": "status-banner" },
      "TRIAL STOPPED FOR SAFETY - the lowest dose combination is overly toxic",
    );
  }
  if (status === "completed") {
    return h(
      "div",
      { class: "banner banner-done", "data-testid": "status-banner" },
      "Trial completed: maximum sample size reached",
    );
  }
  return h(
    "div",
    { class: "banner banner-active", "data-testid": "status-banner" },
    `Active - ${trial.state.total_patients}/${trial.config.max_n} patients, ` +
      `current dose (${trial.state.current[0]}, ${trial.state.current[1]})`,
  );
}

function decisionLine(last: CohortResponse | null): HTMLElement {
  const line = h("div", { class: "decision-line" });
  if (!last) {
    line.append(h("span", { class: "muted" }, "no cohorts recorded yet"));
    return line;
  }
  line.append(
    h("span", { class: `badge badge-${last.decision ?? "stop"}` ,
      "data-testid": "last-decision" }, last.decision ?? ""),
    h("span", { "data-testid": "next-dose", class: "mono" },
      JSON.stringify(last.next_dose)),
    h("span", { "data-testid": "newly-eliminated", class: "mono muted" },
      JSON.stringify(last.newly_eliminated)),
  );
  return line;
}

function selectionBlock(selection: Selection): HTMLElement {
  const block = h("div", { class: "selection", "data-testid": "selection" });
  if (selection.selected) {
    block.append(
      h("p", {}, "Selected MTD: ",
        h("strong", { "data-testid": "selected-dose", class: "mono" },
          JSON.stringify(selection.selected))),
    );
  } else {
    block.append(
      h("p", { "data-testid": "selected-dose" },
        `No dose selected (${selection.reason ?? "no reason given"})`),
    );
  }
  return block;
}

function decisionTableView(table: DecisionTable, currentN: number): HTMLElement {
  const tbl = h("table", { class: "boundary-table", "data-testid": "decision-table" });
  tbl.append(h("tr", {},
    h("th", {}, "patients at dose"),
    h("th", {}, "escalate if DLTs <="),
    h("th", {}, "de-escalate if DLTs >=")));
  for (const row of table.rows) {
    const tr = h("tr", row.n === currentN ? { class: "current-row" } : {},
      h("td", {}, String(row.n)),
      h("td", {}, row.escalate_le < 0 ? "never" : String(row.escalate_le)),
      h("td", {}, String(row.deescalate_ge)));
    tbl.append(tr);
  }
  return tbl;
}

export class TrialView {
  trial: TrialResource | null = null;
  last: CohortResponse | null = null;
  private table: DecisionTable | null = null;

  constructor(
    private container: HTMLElement,
    private api: ApiClient,
    private trialId: string,
  ) {}

  async load(): Promise<void> {
    this.trial = await this.api.getTrial(this.trialId);
    this.table = await this.api.decisionTable(this.trialId);
    this.render();
  }

  async submitCohort(dlt: number): Promise<void> {
    if (!this.trial) return;
    try {
      const resp = await this.api.recordCohort(
        this.trialId,
        dlt,
        this.trial.revision,
      );
      this.trial = resp.trial;
      this.last = resp;
      this.render();
    } catch (err) {
      if (err instanceof ApiError && err.code === "revision_conflict") {
        // someone else moved the trial: refetch, then let the user retry
        await this.load();
        this.note("Trial changed elsewhere; state reloaded - please re-enter the outcome.");
        return;
      }
      this.note(err instanceof ApiError ? err.message : String(err));
    }
  }

  async finalize(force: boolean): Promise<void> {
    try {
      const resp = await this.api.finalize(this.trialId, force);
      this.trial = resp.trial;
      this.render();
    } catch (err) {
      this.note(err instanceof ApiError ? err.message : String(err));
    }
  }

  private note(text: string): void {
    const spot = this.container.querySelector("[data-testid=note]");
    if (spot) spot.textContent = text;
  }

  render(): void {
    const trial = this.trial;
    if (!trial) return;
    const active = trial.state.status === "active";
    const root = h("section", { class: "panel trial-view" });
    root.append(
      h("h2", {}, `Trial ${trial.id}`),
      h("p", { class: "muted mono" },
        `phi=${trial.config.phi} target key (${(trial.config.phi - trial.config.eps1).toFixed(3)}, ` +
        `${(trial.config.phi + trial.config.eps2).toFixed(3)}) ` +
        `${trial.config.algorithm} rev=${trial.revision}`),
      statusBanner(trial),
      decisionLine(this.last),
      renderHeatmap({
        config: trial.config,
        state: trial.state,
        nextDose: this.last?.next_dose ?? (active ? trial.state.current : null),
      }),
    );

    const dltInput = h("input", {
      type: "number", min: "0", max: String(trial.config.cohort_size),
      value: "0", "data-testid": "dlt-input",
    });
    const entryButton = h("button", { "data-testid": "submit-cohort" },
      "Record cohort");
    if (!active) {
      dltInput.setAttribute("disabled", "");
      entryButton.setAttribute("disabled", "");
    }
    const entry = h("form", { class: "cohort-entry" },
      h("label", {}, `DLTs in cohort of ${trial.config.cohort_size}`, dltInput),
      entryButton);
    entry.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submitCohort(Number(dltInput.value));
    });
    root.append(entry, h("p", { class: "muted", "data-testid": "note" }));

    if (trial.selection) {
      root.append(selectionBlock(trial.selection));
    } else {
      const finalizeBtn = h("button", { "data-testid": "finalize" },
        active ? "Finalize now (force)" : "Finalize");
      finalizeBtn.addEventListener("click", () => void this.finalize(active));
      root.append(finalizeBtn);
    }

    if (this.table) {
      const [j, k] = trial.state.current;
      root.append(
        h("h3", {}, "Transition boundaries"),
        decisionTableView(this.table, trial.state.n[j - 1][k - 1]),
      );
    }
    clear(this.container).append(root);
  }
}
