// Thin client over the trial service. The UI never derives trial
// decisions itself; everything displayed comes from these responses.

import type {
  CohortResponse,
  DecisionTable,
  FinalizeResponse,
  SimulationStatus,
  TrialConfig,
  TrialResource,
  TrialSummary,
} from "./types";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let code = "error";
  let message = resp.statusText;
  try {
    const body = await resp.json();
    if (typeof body.detail === "string") {
      message = body.detail;
    } else if (body.detail && typeof body.detail === "object") {
      if (Array.isArray(body.detail)) {
        message = body.detail
          .map((d: { loc?: unknown[]; msg?: string }) =>
            `${(d.loc ?? []).join(".")}: ${d.msg ?? ""}`)
          .join("; ");
        code = "validation";
      } else {
        code = body.detail.code ?? code;
        message = body.detail.message ?? message;
      }
    }
  } catch {
    // leave defaults when the body is not JSON
  }
  return new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(public base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, {
      ...init,
      headers: {
        "Content-Type": "application/json",
        ...(init?.headers as Record<string, string> | undefined),
      },
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  createTrial(
    config: Partial<TrialConfig>,
    idempotencyKey: string,
  ): Promise<TrialResource> {
    return this.request("/trials", {
      method: "POST",
      headers: { "Idempotency-Key": idempotencyKey },
      body: JSON.stringify(config),
    });
  }

  listTrials(): Promise<TrialSummary[]> {
    return this.request("/trials");
  }

  getTrial(id: string): Promise<TrialResource> {
    return this.request(`/trials/${id}`);
  }

  recordCohort(
    id: string,
    dltCount: number,
    expectedRevision: number,
  ): Promise<CohortResponse> {
    return this.request(`/trials/${id}/cohorts`, {
      method: "POST",
      body: JSON.stringify({
        dlt_count: dltCount,
        expected_revision: expectedRevision,
      }),
    });
  }

  finalize(id: string, force = false): Promise<FinalizeResponse> {
    return this.request(`/trials/${id}/finalize`, {
      method: "POST",
      body: JSON.stringify({ force }),
    });
  }

  decisionTable(id: string): Promise<DecisionTable> {
    return this.request(`/trials/${id}/decision-table`);
  }

  submitSimulation(spec: unknown): Promise<{ id: string; status: string }> {
    return this.request("/simulations", {
      method: "POST",
      body: JSON.stringify(spec),
    });
  }

  simulationStatus(id: string): Promise<SimulationStatus> {
    return this.request(`/simulations/${id}`);
  }

  simulationCsvUrl(id: string): string {
    return `${this.base}/simulations/${id}/summary.csv`;
  }
}

/** Poll a simulation until it leaves the queue; resolves on done, rejects on failure. */
export function pollSimulation(
  api: ApiClient,
  id: string,
  intervalMs = 500,
  onTick?: (status: SimulationStatus) => void,
): Promise<SimulationStatus> {
  return new Promise((resolve, reject) => {
    const timer = setInterval(async () => {
      try {
        const status = await api.simulationStatus(id);
        onTick?.(status);
        if (status.status === "done") {
          clearInterval(timer);
          resolve(status);
        } else if (status.status === "failed") {
          clearInterval(timer);
          reject(new Error(status.error ?? "simulation failed"));
        }
      } catch (err) {
        clearInterval(timer);
        reject(err);
      }
    }, intervalMs);
  });
}
