// Dose-matrix heatmap: one cell per (j, k), shaded by the posterior
// probability that the dose's toxicity sits in the target key, with
// eliminated doses hatched, the current dose ringed and the recommended
// next dose highlighted.

import { targetKeyProb } from "./betamath";
import { h } from "./dom";
import type { TrialConfig, TrialState } from "./types";

export interface HeatmapOptions {
  config: TrialConfig;
  state: TrialState;
  nextDose?: [number, number] | null;
}

function shade(p: number): string {
  // white -> deep blue as the target-key probability grows
  const depth = Math.round(240 - 160 * Math.min(1, p / 0.6));
  return `rgb(${depth}, ${depth + 8}, 255)`;
}

export function renderHeatmap(opts: HeatmapOptions): HTMLElement {
  const { config, state } = opts;
  const lo = config.phi - config.eps1;
  const hi = config.phi + config.eps2;
  const eliminated = new Set(state.eliminated.map(([j, k]) => `${j},${k}`));
  const grid = h("div", { class: "heatmap", "data-testid": "heatmap" });
  grid.style.gridTemplateColumns = `auto repeat(${config.cols}, 1fr)`;

  grid.append(h("div", { class: "hm-corner" }));
  for (let k = 1; k <= config.cols; k++) {
    grid.append(h("div", { class: "hm-axis" }, `B${k}`));
  }
  for (let j = config.rows; j >= 1; j--) {
    grid.append(h("div", { class: "hm-axis" }, `A${j}`));
    for (let k = 1; k <= config.cols; k++) {
      const n = state.n[j - 1][k - 1];
      const y = state.y[j - 1][k - 1];
      const prob = targetKeyProb(n, y, lo, hi);
      const classes = ["hm-cell"];
      if (eliminated.has(`${j},${k}`)) classes.push("hm-eliminated");
      if (state.current[0] === j && state.current[1] === k) {
        classes.push("hm-current");
      }
      if (opts.nextDose && opts.nextDose[0] === j && opts.nextDose[1] === k) {
        classes.push("hm-next");
      }
      const cell = h(
        "div",
        {
          class: classes.join(" "),
          "data-dose": `${j},${k}`,
          title: `dose (${j}, ${k}): n=${n}, DLT=${y}, Pr(target key)=${prob.toFixed(3)}`,
        },
        h("span", { class: "hm-count" }, n ? `${y}/${n}` : "—"),
        h("span", { class: "hm-prob" }, prob.toFixed(2)),
      );
      if (!eliminated.has(`${j},${k}`)) {
        cell.style.background = shade(prob);
      }
      grid.append(cell);
    }
  }
  return grid;
}
