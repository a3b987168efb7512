// Hash-routed single-page app over the trial service API.

import { ApiClient } from "./api";
import { clear, h } from "./dom";
import { SimPanel } from "./simPanel";
import { TrialView } from "./trialView";
import { mountWizard } from "./wizard";
import "./style.css";

const api = new ApiClient("");

function nav(): HTMLElement {
  return h("nav", {},
    h("a", { href: "#/" }, "Trials"),
    h("a", { href: "#/new" }, "New trial"),
    h("a", { href: "#/simulations" }, "Simulations"),
  );
}

async function renderHome(container: HTMLElement): Promise<void> {
  const list = h("section", { class: "panel" }, h("h2", {}, "Trials"));
  try {
    const trials = await api.listTrials();
    if (trials.length === 0) {
      list.append(h("p", { class: "muted" }, "No trials yet - create one."));
    }
    const table = h("table", { class: "trial-list" });
    table.append(h("tr", {},
      h("th", {}, "id"), h("th", {}, "matrix"), h("th", {}, "phi"),
      h("th", {}, "moves"), h("th", {}, "status"), h("th", {}, "patients")));
    for (const trial of trials) {
      table.append(h("tr", {},
        h("td", {}, h("a", { href: `#/trial/${trial.id}`, class: "mono" }, trial.id)),
        h("td", {}, `${trial.rows}x${trial.cols}`),
        h("td", {}, String(trial.phi)),
        h("td", {}, trial.algorithm),
        h("td", {}, trial.status),
        h("td", {}, String(trial.total_patients))));
    }
    list.append(table);
  } catch (err) {
    list.append(h("p", { class: "server-error" }, String(err)));
  }
  clear(container).append(list);
}

export async function route(container: HTMLElement): Promise<void> {
  const hash = window.location.hash || "#/";
  const trialMatch = /^#\/trial\/(\w+)$/.exec(hash);
  if (hash === "#/new") {
    mountWizard(container, api, (trial) => {
      window.location.hash = `#/trial/${trial.id}`;
    });
  } else if (trialMatch) {
    const view = new TrialView(container, api, trialMatch[1]);
    await view.load();
  } else if (hash === "#/simulations") {
    new SimPanel(container, api).render();
  } else {
    await renderHome(container);
  }
}

export function startApp(root: HTMLElement): void {
  const container = h("main", {});
  root.append(h("header", {}, h("h1", {}, "keytrial"), nav()), container);
  window.addEventListener("hashchange", () => void route(container));
  void route(container);
}

if (!import.meta.env?.TEST) {
  const root = document.getElementById("app");
  if (root) startApp(root);
}
