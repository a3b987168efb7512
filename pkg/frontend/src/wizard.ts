// Trial-setup wizard: client-side validation mirrors the server's rules
// so obvious mistakes surface inline, but the server stays authoritative.
// One idempotency key per form instance makes network retries safe.

import { ApiClient, ApiError } from "./api";
import { clear, h } from "./dom";
import type { TrialResource } from "./types";

interface FieldSpec {
  name: string;
  label: string;
  value: string;
  step?: string;
}

const FIELDS: FieldSpec[] = [
  { name: "rows", label: "Drug A levels (rows)", value: "3" },
  { name: "cols", label: "Drug B levels (cols)", value: "5" },
  { name: "phi", label: "Target DLT rate phi", value: "0.3", step: "0.01" },
  { name: "eps1", label: "eps1 (below phi)", value: "0.05", step: "0.01" },
  { name: "eps2", label: "eps2 (above phi)", value: "0.05", step: "0.01" },
  { name: "max_n", label: "Maximum sample size", value: "60" },
  { name: "cohort_size", label: "Cohort size", value: "1" },
  { name: "cutoff", label: "Elimination cutoff", value: "0.95", step: "0.01" },
];

export function validateWizard(values: Record<string, number>): Record<string, string> {
  const errors: Record<string, string> = {};
  if (!(values.rows >= 1)) errors.rows = "needs at least one level";
  if (!(values.cols >= 1)) errors.cols = "needs at least one level";
  if (!(values.phi > 0 && values.phi < 1)) errors.phi = "must be inside (0, 1)";
  if (!(values.eps1 > 0)) errors.eps1 = "must be positive";
  if (!(values.eps2 > 0)) errors.eps2 = "must be positive";
  if (values.phi - values.eps1 <= 0) {
    errors.eps1 = "phi - eps1 must stay above 0";
  }
  if (values.phi + values.eps2 >= 1) {
    errors.eps2 = "phi + eps2 must stay below 1";
  }
  if (!(values.cutoff > 0 && values.cutoff < 1)) {
    errors.cutoff = "must be inside (0, 1)";
  }
  if (!(values.cohort_size >= 1)) errors.cohort_size = "must be at least 1";
  if (!(values.max_n >= values.cohort_size)) {
    errors.max_n = "must cover at least one cohort";
  }
  return errors;
}

export function renderWizard(
  api: ApiClient,
  onCreated: (trial: TrialResource) => void,
): HTMLElement {
  const idempotencyKey =
    globalThis.crypto?.randomUUID?.() ?? `ik-${Date.now()}-${Math.random()}`;
  const root = h("section", { class: "panel wizard" },
    h("h2", {}, "New trial"));
  const form = h("form", { "data-testid": "wizard-form" });
  const inputs: Record<string, HTMLInputElement> = {};
  const errorSpots: Record<string, HTMLElement> = {};

  for (const field of FIELDS) {
    const input = h("input", {
      name: field.name,
      type: "number",
      step: field.step ?? "1",
      value: field.value,
    });
    const err = h("span", { class: "field-error", "data-error-for": field.name });
    inputs[field.name] = input;
    errorSpots[field.name] = err;
    form.append(h("label", { class: "field" }, field.label, input, err));
  }
  const algorithm = h("select", { name: "algorithm" });
  for (const alg of ["key1", "key2", "key3", "key4", "key5"]) {
    algorithm.append(h("option", { value: alg }, alg));
  }
  form.append(h("label", { class: "field" }, "Move set", algorithm));
  const seed = h("input", { name: "seed", type: "number", placeholder: "random" });
  form.append(h("label", { class: "field" }, "Seed (optional)", seed));

  const serverError = h("p", { class: "server-error", "data-testid": "wizard-error" });
  const submit = h("button", { type: "submit" }, "Create trial");
  form.append(serverError, submit);

  form.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const values: Record<string, number> = {};
    for (const [name, input] of Object.entries(inputs)) {
      values[name] = Number(input.value);
    }
    const errors = validateWizard(values);
    for (const [name, spot] of Object.entries(errorSpots)) {
      spot.textContent = errors[name] ?? "";
    }
    if (Object.keys(errors).length > 0) return;
    serverError.textContent = "";
    submit.setAttribute("disabled", "");
    try {
      const trial = await api.createTrial(
        {
          ...values,
          algorithm: algorithm.value as TrialResource["config"]["algorithm"],
          seed: seed.value === "" ? null : Number(seed.value),
        },
        idempotencyKey,
      );
      onCreated(trial);
    } catch (err) {
      serverError.textContent =
        err instanceof ApiError ? err.message : String(err);
    } finally {
      submit.removeAttribute("disabled");
    }
  });

  root.append(form);
  return root;
}

export function mountWizard(
  container: HTMLElement,
  api: ApiClient,
  onCreated: (trial: TrialResource) => void,
): void {
  clear(container).append(renderWizard(api, onCreated));
}
